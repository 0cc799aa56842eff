"""Coupled transport / symmetric hyperbolic system definitions.

The model is

    L^alpha(Psi, v) d_alpha Psi = 0,        A^alpha(Psi, v) d_alpha v = 0,

with L^0 = 1, L^1(0, 0) = 1 and symmetric M x M matrices A^alpha.

Array conventions used throughout the package: the solution values carry
their component axes first and any grid axes last, so that ``psi`` has shape
``G`` and ``v`` has shape ``(M, *G)``.  Coefficient callbacks return

    L_components(psi, v) -> (n+1, *G)
    A_matrices(psi, v)   -> (n+1, M, M, *G)
    dL(psi, v)           -> (dL/dPsi (n+1, *G), dL/dv (n+1, M, *G))
    dA(psi, v)           -> (dA/dPsi (n+1, M, M, *G), dA/dv (n+1, M, M, M, *G))

where the last component axis of ``dL/dv`` and ``dA/dv`` is the
differentiation index J.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SystemSpec",
    "Check",
    "ValidationReport",
    "ConfigError",
    "validate_system",
    "blowup_coefficient",
    "builtin_system",
    "gradient_check",
    "fd_derivatives",
]

GNL_THRESHOLD = 1e-8
NORMALIZATION_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid system parameters or scenario configuration."""


@dataclass(frozen=True)
class SystemSpec:
    n: int
    M: int
    L_components: Callable
    A_matrices: Callable
    dL: Optional[Callable] = None
    dA: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"spatial dimension must be >= 1, got {self.n}")
        if self.M < 0:
            raise ConfigError(f"M must be >= 0, got {self.M}")
        if self.dL is None:
            object.__setattr__(self, "dL", lambda psi, v: fd_derivatives(self.L_components, psi, v)[:2])
        if self.dA is None:
            object.__setattr__(self, "dA", lambda psi, v: fd_derivatives(self.A_matrices, psi, v)[:2])

    def background(self):
        """(Psi, v) = (0, 0) as scalar arrays."""
        return np.float64(0.0), np.zeros(self.M)


def fd_derivatives(func, psi, v, step=1e-5):
    """Central-difference derivatives of ``func(psi, v)`` in Psi and each v^J.

    Returns ``(d/dPsi, d/dv)`` with the J axis placed just before the grid
    axes, matching the analytic callback layout.
    """
    psi = np.asarray(psi, dtype=float)
    v = np.asarray(v, dtype=float)
    h = step * np.maximum(1.0, np.abs(psi))
    d_psi = (func(psi + h, v) - func(psi - h, v)) / (2 * h)
    grid_ndim = psi.ndim
    parts = []
    for J in range(v.shape[0]):
        hJ = step * np.maximum(1.0, np.abs(v[J]))
        vp = v.copy()
        vm = v.copy()
        vp[J] += hJ
        vm[J] -= hJ
        parts.append((func(psi, vp) - func(psi, vm)) / (2 * hJ))
    if parts:
        d_v = np.stack(parts, axis=-1 - grid_ndim)
    else:
        base = func(psi, v)
        d_v = np.zeros(base.shape[: base.ndim - grid_ndim] + (0,) + psi.shape)
    return d_psi, d_v


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool


@dataclass
class ValidationReport:
    passed: bool
    checks: list

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def _probe_samples(M, probe_box, n_samples, seed):
    psi_lo, psi_hi = probe_box.get("psi", (-0.1, 0.1))
    v_lo, v_hi = probe_box.get("v", (-0.1, 0.1))
    rng = np.random.default_rng(seed)
    psi = np.concatenate([[0.0, psi_lo, psi_hi], rng.uniform(psi_lo, psi_hi, n_samples)])
    v = np.concatenate(
        [np.zeros((M, 1)), np.full((M, 1), v_lo), np.full((M, 1), v_hi),
         rng.uniform(v_lo, v_hi, (M, n_samples))],
        axis=1,
    )
    return psi, v


def _min_eig(mats):
    # mats: (M, M, *G) -> min eigenvalue over all grid points
    if mats.shape[0] == 0:
        return np.inf
    stacked = np.moveaxis(mats.reshape(mats.shape[0], mats.shape[1], -1), -1, 0)
    sym = 0.5 * (stacked + np.swapaxes(stacked, -1, -2))
    return float(np.linalg.eigvalsh(sym).min())


def validate_system(sys: SystemSpec, probe_box=None, n_samples=64, seed=0) -> ValidationReport:
    """Check normalization, genuine nonlinearity, positivity and symmetry."""
    probe_box = probe_box or {"psi": (-0.1, 0.1), "v": (-0.1, 0.1)}
    for key, (lo, hi) in probe_box.items():
        if not lo <= 0.0 <= hi:
            raise ConfigError(f"probe box for {key} must contain 0, got [{lo}, {hi}]")
    psi, v = _probe_samples(sys.M, probe_box, n_samples, seed)
    checks = []

    L = np.asarray(sys.L_components(psi, v), dtype=float)
    A = np.asarray(sys.A_matrices(psi, v), dtype=float)
    dL_dpsi, _ = sys.dL(psi, v)
    bad = ~np.isfinite(L).all(axis=0)
    if sys.M:
        bad |= ~np.isfinite(A).all(axis=(0, 1, 2))
    bad |= ~np.isfinite(dL_dpsi[1])
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        point = (float(psi[k]), tuple(float(x) for x in v[:, k]))
        checks.append(Check(f"finite_coefficients at (Psi, v)={point}", float("nan"), 0.0, False))
        return ValidationReport(False, checks)

    err = float(np.max(np.abs(L[0] - 1.0)))
    checks.append(Check("L0_unity", err, NORMALIZATION_TOL, err <= NORMALIZATION_TOL))

    psi0, v0 = sys.background()
    L_bg = np.asarray(sys.L_components(psi0, v0), dtype=float)
    err = float(abs(L_bg[1] - 1.0))
    checks.append(Check("L1_background", err, NORMALIZATION_TOL, err <= NORMALIZATION_TOL))

    gnl = float(np.min(np.abs(dL_dpsi[1])))
    checks.append(Check("genuine_nonlinearity", gnl, GNL_THRESHOLD, gnl >= GNL_THRESHOLD))

    A_bg = np.asarray(sys.A_matrices(psi0, v0), dtype=float)
    eig0 = _min_eig(A_bg[0])
    eig01 = _min_eig(A_bg[0] - A_bg[1])
    checks.append(Check("A0_positive_definite", eig0, 0.0, eig0 > 0.0))
    checks.append(Check("A0_minus_A1_positive_definite", eig01, 0.0, eig01 > 0.0))
    eig0p = _min_eig(A[0])
    eig01p = _min_eig(A[0] - A[1])
    checks.append(Check("A0_positive_definite_probe", eig0p, 0.0, eig0p > 0.0))
    checks.append(Check("A0_minus_A1_positive_definite_probe", eig01p, 0.0, eig01p > 0.0))

    for alpha in range(sys.n + 1):
        if sys.M:
            asym = float(np.max(np.abs(A[alpha] - np.swapaxes(A[alpha], 0, 1))))
            scale = 1.0 + float(np.max(np.abs(A[alpha])))
        else:
            asym, scale = 0.0, 1.0
        tol = SYMMETRY_TOL * scale
        checks.append(Check(f"A{alpha}_symmetric", asym, tol, asym <= tol))

    return ValidationReport(all(c.passed for c in checks), checks)


def blowup_coefficient(sys: SystemSpec, psi, v, xi1):
    """Blowup coefficient dL^1/dPsi * xi_1 (works elementwise on grids)."""
    dL_dpsi, _ = sys.dL(np.asarray(psi, dtype=float), np.asarray(v, dtype=float))
    return dL_dpsi[1] * xi1


def gradient_check(sys: SystemSpec, probe_box=None, n_samples=32, seed=1, step=1e-5):
    """Max deviation of the supplied dL/dA from central differences."""
    probe_box = probe_box or {"psi": (-0.1, 0.1), "v": (-0.1, 0.1)}
    psi, v = _probe_samples(sys.M, probe_box, n_samples, seed)
    dLp, dLv = sys.dL(psi, v)
    fLp, fLv = fd_derivatives(sys.L_components, psi, v, step)
    dAp, dAv = sys.dA(psi, v)
    fAp, fAv = fd_derivatives(sys.A_matrices, psi, v, step)
    err_L = max(np.max(np.abs(dLp - fLp), initial=0.0), np.max(np.abs(dLv - fLv), initial=0.0))
    err_A = max(np.max(np.abs(dAp - fAp), initial=0.0), np.max(np.abs(dAv - fAv), initial=0.0))
    return float(err_L), float(err_A)


# builtin families ---------------------------------------------------------


def _grid_shape(psi):
    return np.shape(psi)


def _burgers_simple(n=1, nonlinearity=1.0):
    if nonlinearity == 0.0:
        raise ConfigError("burgers_simple needs a nonzero nonlinearity coefficient")

    def L_components(psi, v):
        psi = np.asarray(psi, dtype=float)
        out = np.zeros((n + 1,) + psi.shape)
        out[0] = 1.0
        out[1] = 1.0 + nonlinearity * psi
        return out

    def A_matrices(psi, v):
        return np.zeros((n + 1, 0, 0) + np.shape(psi))

    def dL(psi, v):
        shape = np.shape(psi)
        d_psi = np.zeros((n + 1,) + shape)
        d_psi[1] = nonlinearity
        return d_psi, np.zeros((n + 1, 0) + shape)

    def dA(psi, v):
        shape = np.shape(psi)
        return np.zeros((n + 1, 0, 0) + shape), np.zeros((n + 1, 0, 0, 0) + shape)

    return SystemSpec(n, 0, L_components, A_matrices, dL, dA, "burgers_simple",
                      {"n": n, "nonlinearity": nonlinearity})


def _burgers_coupled(n=1, M=1, beta=0.1, c=0.5, transverse=None, psi_coupling=0.0,
                     nonlinearity=1.0):
    if not abs(c) < 1.0:
        raise ConfigError(f"v-speed |c| must be < 1 (A0 - A1 positive definite), got c={c}")
    if not abs(beta) <= 1.0:
        raise ConfigError(f"coupling |beta| must be <= 1, got {beta}")
    if M < 1:
        raise ConfigError("burgers_coupled needs M >= 1")
    if nonlinearity == 0.0:
        raise ConfigError("burgers_coupled needs a nonzero nonlinearity coefficient")
    if not abs(psi_coupling) <= 1.0:
        raise ConfigError(f"|psi_coupling| must be <= 1, got {psi_coupling}")
    transverse = list(transverse) if transverse is not None else [0.0] * (n - 1)
    if len(transverse) != n - 1:
        raise ConfigError(f"need {n - 1} transverse speeds, got {len(transverse)}")
    if any(abs(a) > 0.5 for a in transverse):
        raise ConfigError("transverse speeds must satisfy |a| <= 0.5")
    eye = np.eye(M)

    def L_components(psi, v):
        psi = np.asarray(psi, dtype=float)
        out = np.zeros((n + 1,) + psi.shape)
        out[0] = 1.0
        out[1] = 1.0 + nonlinearity * psi + beta * np.asarray(v)[0]
        return out

    def _expand(coef):
        coef = np.asarray(coef, dtype=float)
        return eye.reshape((M, M) + (1,) * coef.ndim) * coef

    def A_matrices(psi, v):
        psi = np.asarray(psi, dtype=float)
        out = np.zeros((n + 1, M, M) + psi.shape)
        out[0] = _expand(np.ones(psi.shape))
        out[1] = _expand(c + psi_coupling * psi)
        for j, a in enumerate(transverse, start=2):
            out[j] = _expand(np.full(psi.shape, a))
        return out

    def dL(psi, v):
        shape = np.shape(psi)
        d_psi = np.zeros((n + 1,) + shape)
        d_psi[1] = nonlinearity
        d_v = np.zeros((n + 1, M) + shape)
        d_v[1, 0] = beta
        return d_psi, d_v

    def dA(psi, v):
        shape = np.shape(psi)
        d_psi = np.zeros((n + 1, M, M) + shape)
        d_psi[1] = _expand(np.full(shape, psi_coupling))
        return d_psi, np.zeros((n + 1, M, M, M) + shape)

    params = {"n": n, "M": M, "beta": beta, "c": c, "transverse": transverse,
              "psi_coupling": psi_coupling, "nonlinearity": nonlinearity}
    return SystemSpec(n, M, L_components, A_matrices, dL, dA, "burgers_coupled", params)


def builtin_system(family, **params) -> SystemSpec:
    """Instantiate a named model family.

    ``burgers_simple``: L^1 = 1 + a*Psi, M = 0 (``nonlinearity`` = a).
    ``burgers_coupled``: L^1 = 1 + a*Psi + beta*v^1, A^0 = I,
    A^1 = (c + g*Psi) I, A^j = a_j I for j >= 2 (``transverse``).
    ``custom``: pass ``n``, ``M``, ``L_components``, ``A_matrices`` and
    optionally ``dL``/``dA`` (finite differences otherwise).
    """
    if family == "burgers_simple":
        return _burgers_simple(**params)
    if family == "burgers_coupled":
        return _burgers_coupled(**params)
    if family == "custom":
        return SystemSpec(**params)
    raise ConfigError(f"unknown system family {family!r}")
