"""Cartesian finite-difference oracle for the same coupled system.

Second-order central reconstruction with global Rusanov dissipation and
SSP-RK2 time stepping on a periodic box.  It is only trusted well before
gradients steepen, so runs past 60% of the predicted lifespan are refused.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

__all__ = [
    "CartesianGrid",
    "CartesianTrajectory",
    "OracleValidityError",
    "CFLError",
    "run_cartesian",
    "exact_plane_wave",
    "cartesian_V",
    "compare",
    "compare_report_json",
]


class OracleValidityError(RuntimeError):
    """The oracle was asked to run where its accuracy is not trusted."""


class CFLError(ValueError):
    pass


@dataclass(frozen=True)
class CartesianGrid:
    n: int
    Nx: int
    length: float = 1.0        # period of x^1
    Ntheta: tuple = ()
    cfl: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "Ntheta", tuple(int(k) for k in self.Ntheta))
        if len(self.Ntheta) != self.n - 1:
            raise ValueError(f"need {self.n - 1} torus node counts")
        if not 0 < self.cfl <= 0.9:
            raise CFLError(f"CFL factor {self.cfl} must lie in (0, 0.9]")

    @property
    def h(self):
        return self.length / self.Nx

    @property
    def spacings(self):
        return (self.h,) + tuple(1.0 / k for k in self.Ntheta)

    @property
    def shape(self):
        return (self.Nx,) + self.Ntheta

    def axes(self):
        return [np.arange(self.Nx) * self.h] + [np.arange(k) / k for k in self.Ntheta]

    def coordinates(self):
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))


@dataclass
class CartesianTrajectory:
    grid: CartesianGrid
    times: list = field(default_factory=list)
    Psi: list = field(default_factory=list)
    v: list = field(default_factory=list)
    max_dpsi0: float = 0.0

    def at(self, t, tol=1e-9):
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[k] - t) > tol:
            raise ValueError(f"no Cartesian snapshot at t={t}")
        return self.Psi[k], self.v[k]


def _central(q, h, ax):
    return (np.roll(q, -1, ax) - np.roll(q, 1, ax)) / (2 * h)


def _speeds(sys, psi, v):
    """Per-direction coefficient operators and Rusanov speeds."""
    L = np.asarray(sys.L_components(psi, v), dtype=float)
    Bs, alpha = [], []
    if sys.M:
        A = np.asarray(sys.A_matrices(psi, v), dtype=float)
        if sys.M > 1:
            A0inv = np.linalg.inv(np.moveaxis(A[0], (0, 1), (-2, -1)))
    for j in range(1, sys.n + 1):
        a = float(np.max(np.abs(L[j])))
        if sys.M == 1:
            B = A[j] / A[0]
            a = max(a, float(np.max(np.abs(B))))
            Bs.append(B)
        elif sys.M:
            B = A0inv @ np.moveaxis(A[j], (0, 1), (-2, -1))
            a = max(a, float(np.max(np.abs(np.linalg.eigvals(B)))))
            Bs.append(np.moveaxis(B, (-2, -1), (0, 1)))
        else:
            Bs.append(None)
        alpha.append(a)
    return L, Bs, alpha


def _rate(sys, cgrid, psi, v):
    """Semi-discrete time derivative of (Psi, v)."""
    L, Bs, alpha = _speeds(sys, psi, v)
    dpsi = np.zeros_like(psi)
    dv = np.zeros_like(v)
    for j in range(1, sys.n + 1):
        h = cgrid.spacings[j - 1]
        ax_s = j - 1  # axis in a scalar grid field
        for q, out, comp in ((psi, dpsi, 0), (v, dv, 1)):
            if comp and not sys.M:
                continue
            ax = ax_s + comp
            s = (np.roll(q, -1, ax) - np.roll(q, 1, ax)) / 2
            qL = q + s / 2                          # left state at i+1/2
            qR = np.roll(q, -1, ax) - np.roll(s, -1, ax) / 2
            avg = (qL + qR) / 2
            jump = qR - qL
            dq = (avg - np.roll(avg, 1, ax)) / h
            diss = alpha[j - 1] * (jump - np.roll(jump, 1, ax)) / (2 * h)
            if comp == 0:
                out += -L[j] * dq + diss
            else:
                out += -np.einsum("IK...,K...->I...", Bs[j - 1], dq) + diss
    return dpsi, dv, alpha


def run_cartesian(sys, cgrid: CartesianGrid, profiles, t_end, lifespan=None, snapshot_times=()):
    """Integrate from t = 0 to t_end; snapshots at the requested times and t_end."""
    if cgrid.n != sys.n:
        raise ValueError("grid and system dimensions differ")
    if lifespan is not None and np.isfinite(lifespan) and t_end > 0.6 * lifespan + 1e-12:
        raise OracleValidityError(
            f"t_end={t_end:.4g} exceeds 60% of the predicted lifespan {lifespan:.4g}")
    x = cgrid.coordinates()
    psi = np.asarray(profiles.psi(x), dtype=float) * np.ones(cgrid.shape)
    v = np.asarray(profiles.v(x), dtype=float).reshape((sys.M,) + cgrid.shape)
    traj = CartesianTrajectory(cgrid)
    g0 = float(np.max(np.abs(_central(psi, cgrid.h, 0))))
    traj.max_dpsi0 = g0
    targets = sorted(set(float(s) for s in snapshot_times if 0 <= s < t_end) | {float(t_end)})
    t = 0.0
    if targets and targets[0] == 0.0:
        traj.times.append(0.0), traj.Psi.append(psi.copy()), traj.v.append(v.copy())
        targets.pop(0)
    while targets:
        k1p, k1v, a = _rate(sys, cgrid, psi, v)
        rate = sum(aj / h for aj, h in zip(a, cgrid.spacings))
        dt = cgrid.cfl / max(rate, 1e-12)
        dt = min(dt, targets[0] - t)
        p1, v1 = psi + dt * k1p, v + dt * k1v
        k2p, k2v, _ = _rate(sys, cgrid, p1, v1)
        psi = 0.5 * (psi + p1 + dt * k2p)
        v = 0.5 * (v + v1 + dt * k2v)
        t += dt
        if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(v))):
            raise OracleValidityError(f"non-finite Cartesian fields at t={t:.4g}")
        g = float(np.max(np.abs(_central(psi, cgrid.h, 0))))
        if g0 > 0 and g > 5 * g0:
            raise OracleValidityError(f"max|d1 Psi| grew {g / g0:.2f}x by t={t:.4g}; oracle no longer valid")
        if abs(t - targets[0]) < 1e-13:
            t = targets.pop(0)
            traj.times.append(t), traj.Psi.append(psi.copy()), traj.v.append(v.copy())
    return traj


def exact_plane_wave(sys, psi0, t, x1, length=1.0, iters=80):
    """Exact plane-symmetric simple wave Psi(t, x^1) with v = 0.

    Solves x = x0 + t L^1(psi0(x0), 0) for x0 by bisection; valid before
    characteristics cross.
    """
    x1 = np.asarray(x1, dtype=float)

    def speed(y):
        return np.asarray(sys.L_components(psi0(y), np.zeros((sys.M,) + np.shape(y))), dtype=float)[1]

    probe = np.linspace(0, length, 2049)
    s = speed(probe)
    lo = x1 - t * s.max() - 1e-9
    hi = x1 - t * s.min() + 1e-9
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f = mid + t * speed(mid) - x1
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f < 0, hi, mid)
    return psi0(0.5 * (lo + hi))


def cartesian_V(sys, cgrid, psi, v):
    """Cartesian gradient (d_t v, d_1 v, ..., d_n v) of a Cartesian snapshot."""
    grads = []
    for j in range(1, sys.n + 1):
        h = cgrid.spacings[j - 1]
        ax = j
        grads.append((8 * (np.roll(v, -1, ax) - np.roll(v, 1, ax))
                      - (np.roll(v, -2, ax) - np.roll(v, 2, ax))) / (12 * h))
    grads = np.stack(grads)
    if sys.M == 0:
        return np.zeros((sys.n + 1, 0) + psi.shape)
    A = np.asarray(sys.A_matrices(psi, v), dtype=float)
    A0 = np.moveaxis(A[0], (0, 1), (-2, -1))
    rhs = np.einsum("jIK...,jK...->I...", A[1:], grads)
    dt = -np.moveaxis(np.linalg.solve(A0, np.moveaxis(rhs, 0, -1)[..., None])[..., 0], -1, 0)
    return np.concatenate([dt[None], grads])


def _interpolator(cgrid, field):
    """Periodic cubic interpolant of a Cartesian grid field."""
    axes = cgrid.axes()
    if cgrid.n == 1:
        xs = np.append(axes[0], cgrid.length)
        spl = CubicSpline(xs, np.append(field, field[:1]), bc_type="periodic")
        return lambda p: spl(np.mod(p[0], cgrid.length))
    if cgrid.n == 2:
        pad = 3
        fx = np.concatenate([field[-pad:], field, field[:pad]], axis=0)
        fx = np.concatenate([fx[:, -pad:], fx, fx[:, :pad]], axis=1)
        ax1 = np.arange(-pad, cgrid.Nx + pad) * cgrid.h
        k = cgrid.Ntheta[0]
        ax2 = np.arange(-pad, k + pad) / k
        spl = RectBivariateSpline(ax1, ax2, fx, kx=3, ky=3)
        return lambda p: spl.ev(np.mod(p[0], cgrid.length), np.mod(p[1], 1.0))
    raise NotImplementedError("comparison implemented for n <= 2")


def compare(sys, geo_state, cart_traj: CartesianTrajectory, periodic=True):
    """Interpolate Cartesian fields at geometric node positions and diff them."""
    cgrid = cart_traj.grid
    psi_c, v_c = cart_traj.at(geo_state.t)
    pts = geo_state.x.reshape(sys.n, -1)
    inside = np.ones(pts.shape[1], dtype=bool)
    if not periodic:
        inside = (pts[0] >= 0) & (pts[0] < cgrid.length)
    pts = pts[:, inside]
    report = {"t": float(geo_state.t), "n_nodes": int(inside.size), "n_outside": int((~inside).sum())}

    def stats(name, geo, cart):
        interp = _interpolator(cgrid, cart)(pts)
        d = np.abs(geo.reshape(-1)[inside] - interp)
        report[f"max_d{name}"] = float(d.max()) if d.size else 0.0
        report[f"l2_d{name}"] = float(np.sqrt(np.mean(d**2))) if d.size else 0.0

    stats("Psi", geo_state.Psi, psi_c)
    Vc = cartesian_V(sys, cgrid, psi_c, v_c)
    for J in range(sys.M):
        stats(f"v{J + 1}", geo_state.v[J], v_c[J])
        for a in range(sys.n + 1):
            stats(f"V{a}_{J + 1}", geo_state.V[a, J], Vc[a, J])
    if sys.M:
        report["max_dv"] = max(report[f"max_dv{J + 1}"] for J in range(sys.M))
        report["max_dV"] = max(report[f"max_dV{a}_{J + 1}"] for J in range(sys.M) for a in range(sys.n + 1))
    else:
        report["max_dv"] = report["max_dV"] = 0.0
    return report


def compare_report_json(reports):
    """JSON error report keyed by comparison time."""
    return json.dumps({f"{r['t']:.12g}": r for r in reports}, sort_keys=True, indent=1)
