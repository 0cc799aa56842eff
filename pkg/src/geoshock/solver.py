"""Method-of-lines integrator in geometric coordinates (t, u, theta).

Each grid node moves along an integral curve of L, so Psi is frozen and all
other unknowns obey ODEs whose right-hand sides need transversal (u, theta)
derivatives.  Those come from finite-difference stencils on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConsistencyError, DtUnderflowError, FrameDegeneracyError, NaNGuardError
from .geometry import (
    GeometricNode,
    GeometricState,
    cartesian_gradient,
    contraction_residuals,
    frame_expansion,
    jacobian,
    xi_theta_components,
)

__all__ = [
    "SolverConfig",
    "Trajectory",
    "transverse_derivatives",
    "d_du",
    "d_dtheta",
    "rhs",
    "step",
    "run",
    "stable_dt",
]

_FIELDS = [f.name for f in fields(GeometricNode)]


@dataclass
class SolverConfig:
    dt: float | None = None       # fixed step; None selects adaptive stepping
    cfl: float = 1.0
    dt_max: float = 0.02
    t_max: float | None = None    # None -> 2 / Astar (set by run)
    mu_stop: float = 0.05
    stencil_order: int = 2
    rk_stages: int = 4
    snapshot_dt: float | None = None
    check_every: int = 50
    max_steps: int = 200_000
    mu_change: float = 0.05       # max relative change of mu per step near the floor

    def __post_init__(self):
        if not 0.0 < self.mu_stop < 0.25:
            raise ValueError(f"mu_stop must lie in (0, 0.25), got {self.mu_stop}")
        if self.stencil_order not in (2, 4):
            raise ValueError(f"stencil_order must be 2 or 4, got {self.stencil_order}")
        if self.rk_stages != 4:
            raise ValueError("only classical RK4 (rk_stages=4) is implemented")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.cfl <= 0 or self.dt_max <= 0:
            raise ValueError("cfl and dt_max must be positive")


# stencils ------------------------------------------------------------------


def d_du(f, grid, order=2):
    """Derivative along the (non-periodic) u axis, one-sided at the ends.

    Boundary rows are written in terms of differences so that constants
    differentiate to exactly zero.
    """
    ax = f.ndim - grid.n
    h = grid.du
    g = np.moveaxis(f, ax, 0)
    out = np.empty_like(g)
    if order == 2 or grid.Nu < 5:
        out[1:-1] = (g[2:] - g[:-2]) / (2 * h)
        out[0] = (4 * (g[1] - g[0]) - (g[2] - g[0])) / (2 * h)
        out[-1] = -(4 * (g[-2] - g[-1]) - (g[-3] - g[-1])) / (2 * h)
        return np.moveaxis(out, 0, ax)
    out[2:-2] = (8 * (g[3:-1] - g[1:-3]) - (g[4:] - g[:-4])) / (12 * h)
    out[0] = (48 * (g[1] - g[0]) - 36 * (g[2] - g[0]) + 16 * (g[3] - g[0]) - 3 * (g[4] - g[0])) / (12 * h)
    out[1] = (-3 * (g[0] - g[1]) + 18 * (g[2] - g[1]) - 6 * (g[3] - g[1]) + (g[4] - g[1])) / (12 * h)
    out[-1] = -(48 * (g[-2] - g[-1]) - 36 * (g[-3] - g[-1]) + 16 * (g[-4] - g[-1]) - 3 * (g[-5] - g[-1])) / (12 * h)
    out[-2] = -(-3 * (g[-1] - g[-2]) + 18 * (g[-3] - g[-2]) - 6 * (g[-4] - g[-2]) + (g[-5] - g[-2])) / (12 * h)
    return np.moveaxis(out, 0, ax)


def d_dtheta(f, grid, i, order=2):
    """Periodic central derivative along torus direction i (i = 2..n)."""
    ax = f.ndim - grid.n + (i - 1)
    h = grid.dtheta[i - 2]
    if order == 2:
        return (np.roll(f, -1, ax) - np.roll(f, 1, ax)) / (2 * h)
    return (8 * (np.roll(f, -1, ax) - np.roll(f, 1, ax))
            - (np.roll(f, -2, ax) - np.roll(f, 2, ax))) / (12 * h)


def transverse_derivatives(grid, f, order=2):
    """(d/du f, [d/dtheta^i f for i = 2..n]) for a field with grid axes last."""
    f = np.asarray(f, dtype=float)
    du = d_du(f, grid, order)
    dth = np.stack([d_dtheta(f, grid, i, order) for i in range(2, grid.n + 1)]) \
        if grid.n > 1 else np.zeros((0,) + f.shape)
    return du, dth


def _xbr(du, dth, c):
    """Xbr f = d/du f - sum_i c_i d/dtheta^i f (c has the grid shape per i)."""
    if c.shape[0] == 0:
        return du
    extra = du.ndim - c.ndim + 1
    cc = c.reshape((c.shape[0],) + (1,) * extra + c.shape[1:])
    return du - np.sum(cc * dth, axis=0)


# right-hand side -------------------------------------------------------------


def _chain(d_psi, d_v, f_psi, f_v):
    """Directional derivative of a coefficient: d/dPsi * f_psi + d/dv^J * f_v^J."""
    return d_psi * f_psi + np.einsum("aJ...,J...->a...", d_v, f_v)


def _locate(grid, state, bad):
    idx = tuple(int(i) for i in np.argwhere(bad)[0])
    coords = [grid.u[idx[0]]] + [grid.theta(i)[idx[i - 1]] for i in range(2, grid.n + 1)]
    return idx, tuple(float(c) for c in coords)


def _guard(grid, state, name, arr, t):
    if np.all(np.isfinite(arr)):
        return
    bad = ~np.isfinite(arr)
    bad = bad.reshape((-1,) + state.mu.shape).any(axis=0)
    idx, coords = _locate(grid, state, bad)
    raise NaNGuardError(f"non-finite d{name}/dt at node {idx} (u, theta)={coords}, t={t:.6g}")


def _rhs(sys, grid, state, order=2):
    M = sys.M
    psi, v, V, mu, xi = state.Psi, state.v, state.V, state.mu, state.xi
    L = np.asarray(sys.L_components(psi, v), dtype=float)
    dLpsi, dLv = sys.dL(psi, v)
    try:
        fe = frame_expansion(state, L=L)
    except FrameDegeneracyError as exc:
        raise FrameDegeneracyError(f"{exc} at t={state.t:.6g}") from None
    f = fe.f
    c = xi_theta_components(state)

    du_psi, th_psi = transverse_derivatives(grid, psi, order)
    du_v, th_v = transverse_derivatives(grid, v, order)
    xbr_psi = _xbr(du_psi, th_psi, c)
    xbr_v = _xbr(du_v, th_v, c)

    Lv = V[0] + np.einsum("j...,jJ...->J...", L[1:], V[1:])
    LL = np.einsum("aJ...,J...->a...", dLv, Lv)
    XbrL = _chain(dLpsi, dLv, xbr_psi, xbr_v)
    ThL = (np.einsum("a...,i...->ia...", dLpsi, th_psi)
           + np.einsum("aJ...,iJ...->ia...", dLv, th_v))

    LL_xi = np.einsum("j...,j...->...", LL[1:], xi)
    dmu = np.einsum("j...,j...->...", XbrL[1:], xi) + mu * LL_xi
    ThL_xi = np.einsum("ij...,j...->i...", ThL[:, 1:], xi)
    dxi = LL_xi * xi - np.einsum("ij...,i...->j...", f, ThL_xi)
    dTheta = ThL[:, 1:].copy()

    comm = -dmu * L[1:] - mu * LL[1:] - XbrL[1:]  # [L, Xbr]
    comm_tan = comm + np.einsum("j...,j...->...", xi, comm) * L[1:]
    c_frame = np.einsum("a...,ia...->i...", state.Xi_cart, f)
    dXi = np.einsum("i...,ij...->j...", c_frame, ThL[:, 1:]) - comm_tan

    dV = np.zeros_like(V)
    if M:
        A = np.asarray(sys.A_matrices(psi, v), dtype=float)
        dApsi, dAv = sys.dA(psi, v)
        du_V, th_V = transverse_derivatives(grid, V, order)
        xbr_V = _xbr(du_V, th_V, c)
        # every V characteristic enters at u = 0; hold the inflow data uniform in u there
        xbr_V[(Ellipsis, 0) + (slice(None),) * (grid.n - 1)] = 0.0
        mu_dpsi = np.concatenate([xbr_psi[None],
                                  xi * xbr_psi + mu * np.einsum("ij...,i...->j...", f, th_psi)])
        B = A[0] + np.einsum("jIK...,j...->IK...", A[1:], xi)
        total = np.einsum("IK...,aK...->aI...", B, xbr_V)
        total += mu * np.einsum("jIK...,ij...,iaK...->aI...", A[1:], f, th_V)
        total += np.einsum("bIK...,a...,bK...->aI...", dApsi, mu_dpsi, V)
        total += mu * np.einsum("bIKJ...,aJ...,bK...->aI...", dAv, V, V)
        dV = -_solve_A0(A[0], total) / mu

    deriv = GeometricState(
        x=L[1:].copy(), Psi=np.zeros_like(psi), v=Lv, V=dV, mu=dmu, xi=dxi,
        Theta=dTheta, Xi_cart=dXi, t=1.0,
    )
    for name in _FIELDS:
        _guard(grid, state, name, getattr(deriv, name), state.t)
    aux = dict(L=L, f=f, c=c, xbr_psi=xbr_psi, th_psi=th_psi, xbr_v=xbr_v, th_v=th_v, fe=fe)
    return deriv, aux


def _solve_A0(A0, b):
    """Solve A0 y_a = b_a for each a; A0 is (M, M, *G), b is (k, M, *G)."""
    if A0.shape[0] == 1:
        return b / A0[0, 0]
    A0m = np.moveaxis(A0, (0, 1), (-2, -1))
    sol = np.linalg.solve(A0m[..., None, :, :], np.moveaxis(b, (0, 1), (-2, -1))[..., None])[..., 0]
    return np.moveaxis(sol, (-2, -1), (0, 1))


def rhs(sys, grid, state, order=2):
    """Time derivative of every node field (returned as a GeometricState)."""
    return _rhs(sys, grid, state, order)[0]


def _axpy(state, deriv, h):
    out = GeometricState(**{name: getattr(state, name) + h * getattr(deriv, name) for name in _FIELDS},
                         t=state.t + h)
    return out


def stable_dt(sys, grid, state, deriv, aux, cfg: SolverConfig):
    """Adaptive step from advection speeds of V and the rate of change of mu."""
    mu = state.mu
    dt = cfg.dt_max
    rate = np.abs(deriv.mu)
    if np.any(rate > 0):
        dt = min(dt, cfg.mu_change * float(np.min(mu / np.maximum(rate, 1e-300))))
        dt = min(dt, cfg.mu_stop / (4.0 * float(rate.max())))
    if sys.M:
        A = np.asarray(sys.A_matrices(state.Psi, state.v), dtype=float)
        B = A[0] + np.einsum("jIK...,j...->IK...", A[1:], state.xi)
        speed_u = _spectral_radius(_solve_A0(A[0], B)) / mu
        speed = speed_u / grid.du
        c = aux["c"]
        f = aux["f"]
        for i in range(grid.n - 1):
            Af = np.einsum("jIK...,j...->IK...", A[1:], f[i])
            speed = speed + (np.abs(c[i]) * speed_u + _spectral_radius(_solve_A0(A[0], Af))) / grid.dtheta[i]
        smax = float(speed.max())
        if smax > 0:
            dt = min(dt, cfg.cfl / smax)
    return dt


def _spectral_radius(mats):
    """Spectral radius of (M, M, *G) matrices."""
    if mats.shape[0] == 1:
        return np.abs(mats[0, 0])
    return np.max(np.abs(np.linalg.eigvals(np.moveaxis(mats, (0, 1), (-2, -1)))), axis=-1)


def _rk4(sys, grid, state, k1, dt, order):
    s2 = _axpy(state, k1, dt / 2)
    k2 = rhs(sys, grid, s2, order)
    s3 = _axpy(state, k2, dt / 2)
    k3 = rhs(sys, grid, s3, order)
    s4 = _axpy(state, k3, dt)
    k4 = rhs(sys, grid, s4, order)
    new = GeometricState(
        **{name: getattr(state, name)
           + dt / 6 * (getattr(k1, name) + 2 * getattr(k2, name) + 2 * getattr(k3, name) + getattr(k4, name))
           for name in _FIELDS},
        t=state.t + dt,
    )
    return new, min(float(s.mu.min()) for s in (s2, s3, s4, new))


def step(sys, grid, state, dt, cfg: SolverConfig | None = None, k1=None):
    """One classical RK4 step; halves dt while a stage drops mu below mu_stop/2.

    Returns the new state and the step size actually taken.
    """
    cfg = cfg or SolverConfig()
    if k1 is None:
        k1 = rhs(sys, grid, state, cfg.stencil_order)
    for _ in range(21):
        try:
            new, mu_min = _rk4(sys, grid, state, k1, dt, cfg.stencil_order)
        except NaNGuardError:
            mu_min = -np.inf
        if mu_min >= cfg.mu_stop / 2:
            return new, dt
        dt /= 2
    raise DtUnderflowError(f"dt underflow at t={state.t:.6g}: mu kept dropping below {cfg.mu_stop / 2}")


# driver ----------------------------------------------------------------------


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    times: list = field(default_factory=list)
    mu_star: list = field(default_factory=list)
    mu_history: list = field(default_factory=list)
    Lmu_history: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    sup_dpsi: list = field(default_factory=list)
    sup_psi: list = field(default_factory=list)
    sup_v: list = field(default_factory=list)
    sup_V: list = field(default_factory=list)
    jac_ratio: list = field(default_factory=list)
    consistency: list = field(default_factory=list)
    stop_reason: str = ""

    def arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in (
            "times", "mu_star", "mu_history", "Lmu_history", "dt_history", "sup_dpsi",
            "sup_psi", "sup_v", "sup_V")}


def _record(traj, sys, grid, state, deriv, aux):
    traj.times.append(state.t)
    traj.mu_star.append(float(state.mu.min()))
    traj.mu_history.append(state.mu.copy())
    traj.Lmu_history.append(deriv.mu.copy())
    res = contraction_residuals(state, L=aux["L"])
    traj.residuals.append({k: float(np.max(np.abs(r))) if r.size else 0.0 for k, r in res.items()})
    grad = cartesian_gradient(state, 0.0, aux["xbr_psi"], aux["th_psi"], f=aux["f"], weighted=True)
    traj.sup_dpsi.append(float(np.max(np.abs(grad / state.mu))))
    traj.sup_psi.append(float(np.max(np.abs(state.Psi))))
    traj.sup_v.append(float(np.max(np.abs(state.v))) if state.v.size else 0.0)
    traj.sup_V.append(float(np.max(np.abs(state.V))) if state.V.size else 0.0)
    _, det, _ = jacobian(state, L=aux["L"])
    ratio = np.abs(det) / state.mu
    traj.jac_ratio.append((float(ratio.min()), float(ratio.max())))


def v_consistency(sys, grid, state, aux, order=2):
    """Drift of evolved V against stencil frame derivatives of v.

    Returns (drift, estimate) where the estimate is the gap between the
    order-2 and order-4 stencils, a proxy for the stencil error itself.
    """
    if sys.M == 0:
        return 0.0, 0.0
    L = aux["L"]
    xbr_from_V = -state.mu * np.einsum("j...,jJ...->J...", L[1:], state.V[1:])
    th_from_V = np.einsum("ij...,jJ...->iJ...", state.Theta, state.V[1:])
    drift = max(float(np.max(np.abs(xbr_from_V - aux["xbr_v"]))),
                float(np.max(np.abs(th_from_V - aux["th_v"]))) if th_from_V.size else 0.0)
    other = 4 if order == 2 else 2
    du_o, th_o = transverse_derivatives(grid, state.v, other)
    xbr_o = _xbr(du_o, th_o, aux["c"])
    est = max(float(np.max(np.abs(xbr_o - aux["xbr_v"]))),
              float(np.max(np.abs(th_o - aux["th_v"]))) if th_o.size else 0.0)
    return drift, est


def run(sys, grid, state0, cfg: SolverConfig, astar=None):
    """Integrate until mu* <= mu_stop, t >= t_max, or a solver error.

    Returns a Trajectory.  Snapshots are kept at multiples of
    ``cfg.snapshot_dt`` (plus the initial and final states).
    """
    t_max = cfg.t_max
    if t_max is None:
        t_max = 2.0 / astar if astar and astar > 0 else 10.0
    traj = Trajectory()
    state = state0.copy()
    traj.snapshots.append(state.copy())
    next_snap = cfg.snapshot_dt if cfg.snapshot_dt else np.inf
    order = cfg.stencil_order
    v_scale = max(1.0, float(np.max(np.abs(state0.mu[None] * state0.V)))) if sys.M else 1.0
    nstep = 0
    while True:
        deriv, aux = _rhs(sys, grid, state, order)
        _record(traj, sys, grid, state, deriv, aux)
        if nstep % cfg.check_every == 0 and sys.M:
            drift, est = v_consistency(sys, grid, state, aux, order)
            traj.consistency.append((state.t, drift, est))
            if drift > 10 * est + 1e-6 * v_scale:
                raise ConsistencyError(
                    f"V drift {drift:.3g} exceeds 10x stencil estimate {est:.3g} at t={state.t:.6g}")
        if traj.mu_star[-1] <= cfg.mu_stop:
            traj.stop_reason = "mu_floor"
            break
        if state.t >= t_max * (1 - 1e-12):
            traj.stop_reason = "t_max"
            break
        if nstep >= cfg.max_steps:
            traj.stop_reason = "max_steps"
            break
        dt = cfg.dt if cfg.dt is not None else stable_dt(sys, grid, state, deriv, aux, cfg)
        dt = min(dt, t_max - state.t, next_snap - state.t)
        if dt < 1e-12 * max(1.0, t_max):
            raise DtUnderflowError(f"dt={dt:.3g} underflow at t={state.t:.6g}")
        state, taken = step(sys, grid, state, dt, cfg, k1=deriv)
        traj.dt_history.append(taken)
        nstep += 1
        if state.t >= next_snap - 1e-12:
            traj.snapshots.append(state.copy())
            while next_snap <= state.t + 1e-12:
                next_snap += cfg.snapshot_dt
    if traj.snapshots[-1].t != state.t:
        traj.snapshots.append(state.copy())
    return traj
