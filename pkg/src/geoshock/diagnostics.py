"""Quantities the shock-formation statements are about.

Data-size parameters, lifespan extrapolation, the blowup-rate certificate,
energies and characteristic fluxes, the Jacobian/mu ratio and an
injectivity check of the change-of-variables map.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

from .geometry import frame_expansion, gamma, jacobian, xi_theta_components
from .solver import _xbr, transverse_derivatives
from .system_model import blowup_coefficient

__all__ = [
    "DataSizeParams",
    "RunSummary",
    "data_size",
    "crossing_time",
    "fit_lifespan",
    "lifespan_report",
    "blowup_certificate",
    "energies",
    "characteristic_flux",
    "jacobian_mu_ratio",
    "injectivity_check",
    "summarize",
]


def _frame_psi(sys, grid, state, order=2):
    """(Xbr Psi, Theta_i Psi, L, frame expansion) at every node."""
    L = state.L(sys)
    du, dth = transverse_derivatives(grid, state.Psi, order)
    c = xi_theta_components(state)
    return _xbr(du, dth, c), dth, L, frame_expansion(state, L=L)


@dataclass
class DataSizeParams:
    alpha0: float
    A0: float
    Astar: float
    eps0_proxy: float
    G_background: float

    @property
    def T_pred(self):
        return 1.0 / self.Astar if self.Astar > 0 else float("inf")


def data_size(sys, grid, state0, order=2) -> DataSizeParams:
    """Discrete sups over the t = 0 grid."""
    xbr, th, L, fe = _frame_psi(sys, grid, state0, order)
    G = blowup_coefficient(sys, state0.Psi, state0.v, state0.xi[0])
    GX = G * xbr
    astar = float(max(0.0, np.max(-GX)))
    parts = [0.0]  # L Psi vanishes identically
    if th.size:
        parts.append(float(np.max(np.abs(th))))
    if state0.v.size:
        parts += [float(np.max(np.abs(state0.v))), float(np.max(np.abs(state0.V)))]
    psi0, v0 = sys.background()
    g_bg = float(blowup_coefficient(sys, np.asarray(psi0), np.asarray(v0), -1.0))
    return DataSizeParams(
        alpha0=float(np.max(np.abs(state0.Psi))),
        A0=float(np.max(np.abs(xbr))),
        Astar=astar,
        eps0_proxy=max(parts),
        G_background=g_bg,
    )


def crossing_time(sys, profiles, n_samples=4001, n_theta=64):
    """Characteristic-crossing time 1 / sup(-d_1 L^1) from analytic gradients.

    Exact for plane-symmetric simple waves; used as the lifespan oracle.
    """
    x1 = np.linspace(0.0, 1.0, n_samples)
    if sys.n == 1:
        x = x1[None]
    else:
        th = np.arange(n_theta) / n_theta
        mesh = np.meshgrid(x1, *([th] * (sys.n - 1)), indexing="ij")
        x = np.stack(mesh)
    psi = profiles.psi(x)
    v = profiles.v(x)
    dpsi = profiles.grad_psi(x)[0]
    dv = profiles.grad_v(x)[0]
    dLpsi, dLv = sys.dL(psi, v)
    rate = dLpsi[1] * dpsi + np.einsum("J...,J...->...", dLv[1], dv)
    m = float(np.max(-rate))
    return 1.0 / m if m > 0 else float("inf")


def fit_lifespan(times, mu_history, frac=0.3):
    """Per-node least-squares line through the last ``frac`` of mu(t).

    Returns (T_extrapolated, slopes, max abs fit residual).  Only nodes with
    negative slope extrapolate to a finite zero crossing.
    """
    times = np.asarray(times, dtype=float)
    mh = np.asarray(mu_history, dtype=float).reshape(len(times), -1)
    sel = times >= times[0] + (1 - frac) * (times[-1] - times[0])
    if sel.sum() < 2:
        sel[-2:] = True
    tt, yy = times[sel], mh[sel]
    coef = np.polyfit(tt, yy, 1)
    slope, icpt = coef
    resid = float(np.max(np.abs(yy - (np.outer(tt, slope) + icpt))))
    with np.errstate(divide="ignore", invalid="ignore"):
        zero = np.where(slope < 0, -icpt / slope, np.inf)
    return float(np.min(zero)), slope.reshape(np.shape(mu_history)[1:]), resid


def affine_residual(times, mu_history):
    """Max residual of a straight-line fit of each node's full mu history."""
    times = np.asarray(times, dtype=float)
    mh = np.asarray(mu_history, dtype=float).reshape(len(times), -1)
    slope, icpt = np.polyfit(times, mh, 1)
    return float(np.max(np.abs(mh - (np.outer(times, slope) + icpt))))


def blowup_certificate(sys, grid, state, astar, C=4.0, window=(0.05, 0.25), order=2):
    """Check G Xbr Psi < -Astar/4 and mu |X Psi| >= Astar/(8|G_bg|) where mu < 1/4.

    mu |X Psi| equals |Xbr Psi| since Xbr = mu X.  Also checks the Euclidean
    length of X against [1/C, C].
    """
    lo, hi = window
    mask = (state.mu < hi) & (state.mu >= lo)
    rec = dict(applicable=bool(np.any(state.mu < hi)), n_checked=int(mask.sum()), t=float(state.t),
               violations_G=0, violations_rate=0, violations_length=0,
               min_mu_XPsi=None, max_G_XbrPsi=None, threshold_rate=None, threshold_G=None,
               length_range=None, passed=True)
    if not rec["n_checked"]:
        return rec
    xbr, _, L, _ = _frame_psi(sys, grid, state, order)
    G = blowup_coefficient(sys, state.Psi, state.v, state.xi[0])
    gx = (G * xbr)[mask]
    rate = np.abs(xbr)[mask]
    psi0, v0 = sys.background()
    g_bg = abs(float(blowup_coefficient(sys, np.asarray(psi0), np.asarray(v0), -1.0)))
    thr_rate = astar / (8 * g_bg)
    thr_g = -astar / 4
    length2 = np.sum(L[1:] ** 2, axis=0)[mask]
    rec.update(
        violations_G=int(np.sum(gx >= thr_g)),
        violations_rate=int(np.sum(rate < thr_rate)),
        violations_length=int(np.sum((length2 < 1 / C) | (length2 > C))),
        min_mu_XPsi=float(rate.min()),
        max_G_XbrPsi=float(gx.max()),
        threshold_rate=float(thr_rate),
        threshold_G=float(thr_g),
        length_range=(float(length2.min()), float(length2.max())),
    )
    rec["passed"] = rec["violations_G"] + rec["violations_rate"] + rec["violations_length"] == 0
    return rec


def _u_quadrature(grid, u_cut):
    """Trapezoid weights in u over [0, u_cut] (u_cut snapped to a node)."""
    if u_cut is None:
        k = grid.Nu - 1
    else:
        if not 0 < u_cut <= grid.U0 + 1e-12:
            raise ValueError(f"u_cut must lie in (0, U0], got {u_cut}")
        k = int(round(u_cut / grid.du))
        if abs(k * grid.du - u_cut) > 1e-9 * grid.U0:
            warnings.warn(f"u_cut={u_cut} snapped to grid node u={k * grid.du}", stacklevel=3)
        k = max(k, 1)
    w = np.full(k + 1, grid.du)
    w[0] = w[-1] = grid.du / 2
    return k, w


def _integrate(grid, field, k, w):
    """Integral over u in [0, u_k] and the unit torus of a grid field."""
    f = field[: k + 1]
    per_u = f.reshape(k + 1, -1).mean(axis=1)  # periodic trapezoid on the torus
    return float(np.dot(w, per_u))


def energies(sys, grid, state, u_cut=None, order=2):
    """Order <= 1 shock energies of Psi and regular energies of v and V."""
    k, w = _u_quadrature(grid, u_cut)
    out = {"t": float(state.t), "u_cut": float(k * grid.du)}
    out["E_shock_Psi"] = _integrate(grid, state.Psi**2, k, w)
    out["E_shock_LPsi"] = 0.0
    _, th = transverse_derivatives(grid, state.Psi, order)
    out["E_shock_ThetaPsi"] = _integrate(grid, np.sum(th**2, axis=0), k, w) if th.size else 0.0
    _, det, _ = jacobian(state, sys)
    meas = np.abs(det)
    if sys.M:
        A0 = np.asarray(sys.A_matrices(state.Psi, state.v), dtype=float)[0]
        ev = np.einsum("I...,IK...,K...->...", state.v, A0, state.v)
        eV = np.einsum("aI...,IK...,aK...->...", state.V, A0, state.V)
        out["E_reg_v"] = _integrate(grid, ev * meas, k, w)
        out["E_reg_V"] = _integrate(grid, eV * meas, k, w)
        base = _integrate(grid, state.mu * np.sum(state.v**2, axis=0), k, w)
        out["coercive_ratio_v"] = out["E_reg_v"] / base if base > 0 else None
    else:
        out["E_reg_v"] = out["E_reg_V"] = 0.0
        out["coercive_ratio_v"] = None
    return out


def _flux_density(sys, state, k):
    """Integrands on the slice u = u_k: (det N, w.A^alpha H_alpha w for v, for V)."""
    node = state.node(k, *([slice(None)] * (state.mu.ndim - 1)))
    L = node.L(sys)
    lam = node.lam
    H = lam / np.sqrt(np.sum(lam**2, axis=0))
    n = node.xi.shape[0]
    cols = [H, L] + [np.concatenate([np.zeros((1,) + node.mu.shape), node.Theta[i]]) for i in range(n - 1)]
    N = np.moveaxis(np.stack(cols, axis=1), (0, 1), (-2, -1))
    detN = np.abs(np.linalg.det(N))
    if sys.M:
        A = np.asarray(sys.A_matrices(node.Psi, node.v), dtype=float)
        AH = np.einsum("aIK...,a...->IK...", A, H)
        fv = np.einsum("I...,IK...,K...->...", node.v, AH, node.v)
        fV = np.einsum("bI...,IK...,bK...->...", node.V, AH, node.V)
    else:
        fv = fV = np.zeros_like(detN)
    return detN, fv, fV


def characteristic_flux(sys, grid, snapshots, u_cut=None):
    """Fluxes through P_u over the snapshot times, by trapezoid in t.

    Returns the flux of v, of V and of the unit field, the latter divided by
    sqrt(2) times the coordinate area t * |torus|.
    """
    k = grid.Nu - 1 if u_cut is None else int(round(u_cut / grid.du))
    ts = np.array([s.t for s in snapshots])
    dens = [_flux_density(sys, s, k) for s in snapshots]
    per_t = np.array([[np.mean(d) for d in triple] for triple in dens])  # (T, 3)
    if len(ts) < 2:
        return dict(F_reg_v=0.0, F_reg_V=0.0, unit_flux=0.0, unit_flux_ratio=None, u=k * grid.du)
    integ = trapezoid(per_t, ts, axis=0)
    area = ts[-1] - ts[0]
    return dict(F_reg_v=float(integ[1]), F_reg_V=float(integ[2]), unit_flux=float(integ[0]),
                unit_flux_ratio=float(integ[0] / (np.sqrt(2) * area)), u=k * grid.du)


def jacobian_mu_ratio(sys, state):
    """Statistics of |det J| / mu and a fitted constant C in |ratio - 1| <= C |gamma|."""
    _, det, _ = jacobian(state, sys)
    ratio = np.abs(det) / state.mu
    g = np.max(np.abs(gamma(state)), axis=0)
    dev = np.abs(ratio - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(g > 0, dev / g, 0.0)
    return dict(min=float(ratio.min()), max=float(ratio.max()), mean=float(ratio.mean()),
                C_fit=float(np.max(c)), sign_negative=bool(np.all(det < 0)))


def injectivity_check(grid, state, floor_factor=1e-3):
    """x^1 strictly decreasing in u on each slice and no two node images collide.

    Returns (passed, witness) where witness names the offending pair.
    """
    x = state.x
    dx = np.diff(x[0], axis=0)
    if np.any(dx >= 0):
        idx = tuple(int(i) for i in np.argwhere(dx >= 0)[0])
        other = (idx[0] + 1,) + idx[1:]
        return False, dict(kind="monotonicity", nodes=[idx, other], x1=[float(x[0][idx]), float(x[0][other])])
    spacing = min([grid.du] + list(grid.dtheta))
    floor = floor_factor * spacing
    pts = state.x_wrapped.reshape(grid.n, -1).T
    if grid.n > 1:
        lo = pts[:, 0].min()
        pts = pts.copy()
        pts[:, 0] -= lo
        box = np.array([pts[:, 0].max() * 2 + 10.0] + [1.0] * (grid.n - 1))
        pts[:, 1:] = np.mod(pts[:, 1:], 1.0)
        tree = cKDTree(pts, boxsize=box)
    else:
        tree = cKDTree(pts)
    dist, nb = tree.query(pts, k=2)
    j = int(np.argmin(dist[:, 1]))
    dmin = float(dist[j, 1])
    if dmin <= floor:
        a = np.unravel_index(j, grid.shape)
        other = int(nb[j, 1]) if int(nb[j, 1]) != j else int(nb[j, 0])  # ties can list j itself second
        b = np.unravel_index(other, grid.shape)
        return False, dict(kind="collision", nodes=[tuple(map(int, a)), tuple(map(int, b))], distance=dmin)
    return True, dict(kind="none", min_distance=dmin, floor=floor)


# run summary -----------------------------------------------------------------


@dataclass
class RunSummary:
    stop_reason: str
    T_stop: float
    T_pred: float
    T_extrapolated: float
    T_cross: float
    lifespan_gap: float
    lifespan_gap_cross: float
    fit_residual: float
    affine_residual: float
    data: dict
    n_steps: int
    times: list
    mu_star: list
    sup_psi: list
    sup_dpsi: list
    sup_v: list
    sup_V: list
    jacobian_ratio: list
    residual_max: dict
    residual_estimate: float
    blowup: dict
    energies: list
    flux: dict
    injectivity: list
    consistency_max_ratio: float
    lmu_slope_deviation: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def lifespan_report(summary: RunSummary):
    """(T_pred, T_extrapolated, relative gap); meaningful when the run hit the mu floor."""
    if summary.stop_reason != "mu_floor":
        raise ValueError(f"lifespan needs a mu_floor stop, got {summary.stop_reason!r}")
    return summary.T_pred, summary.T_extrapolated, summary.lifespan_gap


def summarize(sys, grid, traj, solver_cfg, profiles=None, length_C=4.0, u_cut=None):
    """Collect the run diagnostics into a RunSummary."""
    order = solver_cfg.stencil_order
    state0 = traj.snapshots[0]
    data = data_size(sys, grid, state0, order)
    arr = traj.arrays()
    times, mh = arr["times"], arr["mu_history"]
    T_pred = data.T_pred
    T_cross = crossing_time(sys, profiles) if profiles is not None else float("nan")
    if traj.stop_reason == "mu_floor" and len(times) > 2:
        T_ext, slopes, fit_res = fit_lifespan(times, mh)
        aff = affine_residual(times, mh)
        xbr, _, _, _ = _frame_psi(sys, grid, state0, order)
        gx0 = blowup_coefficient(sys, state0.Psi, state0.v, state0.xi[0]) * xbr
        slope_dev = float(np.max(np.abs(slopes - gx0)))
    else:
        T_ext, fit_res, aff, slope_dev = float("inf"), 0.0, affine_residual(times, mh) if len(times) > 2 else 0.0, 0.0
    gap = abs(T_ext - T_pred) / T_pred if np.isfinite(T_pred) and np.isfinite(T_ext) else float("nan")
    gap_x = abs(T_ext - T_cross) / T_cross if np.isfinite(T_cross) and np.isfinite(T_ext) else float("nan")

    states = list(traj.snapshots)
    blow = dict(applicable=False, n_checked=0, violations=0, min_mu_XPsi=None, max_G_XbrPsi=None,
                threshold_rate=None, threshold_G=None, passed=True, per_snapshot=[])
    if data.Astar > 0:
        for s in states:
            rec = blowup_certificate(sys, grid, s, data.Astar, C=length_C,
                                     window=(solver_cfg.mu_stop, 0.25), order=order)
            if not rec["n_checked"]:
                continue
            blow["applicable"] = True
            blow["n_checked"] += rec["n_checked"]
            blow["violations"] += rec["violations_G"] + rec["violations_rate"] + rec["violations_length"]
            blow["min_mu_XPsi"] = rec["min_mu_XPsi"] if blow["min_mu_XPsi"] is None else min(blow["min_mu_XPsi"], rec["min_mu_XPsi"])
            blow["max_G_XbrPsi"] = rec["max_G_XbrPsi"] if blow["max_G_XbrPsi"] is None else max(blow["max_G_XbrPsi"], rec["max_G_XbrPsi"])
            blow["threshold_rate"], blow["threshold_G"] = rec["threshold_rate"], rec["threshold_G"]
            blow["per_snapshot"].append(rec)
        blow["passed"] = blow["violations"] == 0

    ens = [energies(sys, grid, s, u_cut, order) for s in states]
    flux = characteristic_flux(sys, grid, states, u_cut)
    inj = []
    for s in states:
        ok, wit = injectivity_check(grid, s)
        inj.append(dict(t=float(s.t), mu_star=float(s.mu.min()), passed=ok, witness=wit))
    res_max = {k: max(r[k] for r in traj.residuals) for k in traj.residuals[0]}
    dt_max = max(traj.dt_history) if traj.dt_history else 0.0
    est = max(dt_max**2 + grid.du**2 + sum(h * h for h in grid.dtheta), 1e-12)
    cons = [d / e for _, d, e in traj.consistency if e > 0]
    return RunSummary(
        stop_reason=traj.stop_reason,
        T_stop=float(times[-1]),
        T_pred=T_pred,
        T_extrapolated=T_ext,
        T_cross=T_cross,
        lifespan_gap=gap,
        lifespan_gap_cross=gap_x,
        fit_residual=fit_res,
        affine_residual=aff,
        data=asdict(data),
        n_steps=len(traj.dt_history),
        times=list(times),
        mu_star=list(arr["mu_star"]),
        sup_psi=list(arr["sup_psi"]),
        sup_dpsi=list(arr["sup_dpsi"]),
        sup_v=list(arr["sup_v"]),
        sup_V=list(arr["sup_V"]),
        jacobian_ratio=[list(r) for r in traj.jac_ratio],
        residual_max=res_max,
        residual_estimate=est,
        blowup=blow,
        energies=ens,
        flux=flux,
        injectivity=inj,
        consistency_max_ratio=max(cons) if cons else 0.0,
        lmu_slope_deviation=slope_dev,
    )
