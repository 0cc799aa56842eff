"""Eikonal-adapted frame on the (u, theta) grid.

Every node of the geometric grid follows an integral curve of L.  Its
state carries the Cartesian position, the solution (Psi, v, V) and the
frame quantities mu, xi_j, Theta_i^j and Xi^j.  The vectorfields are

    L     = d/dt                    (along the node)
    Xbr   = mu X = -mu L^j d_j      (transversal, Xbr u = 1)
    Theta_i = d/dtheta^i            (torus tangent)

and Cartesian partials expand as d_t = L + X, d_j = xi_j X + f_ij Theta_i.

All functions here accept a single node (component axes only) or a whole
state (component axes followed by grid axes).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import FrameDegeneracyError, InitializationError, MuFloorError

__all__ = [
    "GridSpec",
    "GeometricNode",
    "GeometricState",
    "FrameExpansion",
    "InitializationError",
    "FrameDegeneracyError",
    "MuFloorError",
    "init_sigma0",
    "frame_expansion",
    "cartesian_gradient",
    "jacobian",
    "xi_theta_components",
    "contraction_residuals",
    "gamma",
    "snapshot_columns",
    "write_snapshot_csv",
    "read_snapshot_csv",
]

COND_MAX = 1e8
MU_FLOOR = 1e-2


@dataclass(frozen=True)
class GridSpec:
    n: int
    Nu: int
    Ntheta: tuple = ()
    U0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "Ntheta", tuple(int(k) for k in self.Ntheta))
        if not 0.0 < self.U0 <= 1.0:
            raise ValueError(f"U0 must lie in (0, 1], got {self.U0}")
        if self.Nu < 3:
            raise ValueError(f"Nu must be >= 3, got {self.Nu}")
        if len(self.Ntheta) != self.n - 1:
            raise ValueError(f"need {self.n - 1} torus node counts, got {self.Ntheta}")
        if any(k < 4 for k in self.Ntheta):
            raise ValueError(f"each Ntheta must be >= 4, got {self.Ntheta}")

    @property
    def du(self):
        return self.U0 / (self.Nu - 1)

    @property
    def dtheta(self):
        return tuple(1.0 / k for k in self.Ntheta)

    @property
    def shape(self):
        return (self.Nu,) + self.Ntheta

    @property
    def u(self):
        return np.linspace(0.0, self.U0, self.Nu)

    def theta(self, i):
        """Node coordinates along torus direction i (i = 2..n)."""
        k = self.Ntheta[i - 2]
        return np.arange(k) / k

    def coordinates(self):
        """(u, theta^2, ..., theta^n) broadcast to the grid shape."""
        axes = [self.u] + [self.theta(i) for i in range(2, self.n + 1)]
        return np.meshgrid(*axes, indexing="ij")


@dataclass
class GeometricNode:
    x: np.ndarray
    Psi: np.ndarray
    v: np.ndarray
    V: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    Theta: np.ndarray
    Xi_cart: np.ndarray

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def M(self):
        return self.v.shape[0]

    def L(self, sys):
        return np.asarray(sys.L_components(self.Psi, self.v), dtype=float)

    @property
    def xi_small(self):
        out = self.xi.copy()
        out[0] += 1.0
        return out

    @property
    def Theta_small(self):
        out = self.Theta.copy()
        for i in range(self.n - 1):
            out[i, i + 1] -= 1.0
        return out

    @property
    def lam(self):
        """Spacetime one-form lambda = (1, xi_1, ..., xi_n)."""
        return np.concatenate([np.ones((1,) + self.mu.shape), self.xi], axis=0)


@dataclass
class GeometricState(GeometricNode):
    t: float = 0.0

    def copy(self):
        return replace(self, **{f.name: np.array(getattr(self, f.name), copy=True)
                                for f in fields(GeometricNode)})

    def node(self, *index):
        """The GeometricNode at grid index (k, m2, ..., mn)."""
        sl = (Ellipsis,) + tuple(index)
        return GeometricNode(**{f.name: np.array(getattr(self, f.name)[sl])
                                for f in fields(GeometricNode)})

    def arrays(self):
        return {f.name: getattr(self, f.name) for f in fields(GeometricNode)}

    @property
    def grid_shape(self):
        return self.mu.shape

    @property
    def winding(self):
        """Integer winding counters of the torus coordinates x^2..x^n."""
        return np.floor(self.x[1:]).astype(int)

    @property
    def x_wrapped(self):
        out = self.x.copy()
        out[1:] -= np.floor(out[1:])
        return out


def _last(a, k):
    """Move the first k component axes of ``a`` to the end."""
    return np.moveaxis(a, tuple(range(k)), tuple(range(-k, 0)))


def _first(a, k):
    return np.moveaxis(a, tuple(range(-k, 0)), tuple(range(k)))


def init_sigma0(sys, grid: GridSpec, profiles) -> GeometricState:
    """Initial state on Sigma_0: u = 1 - x^1, theta = (x^2, ..., x^n).

    ``profiles`` provides ``psi(x)``, ``v(x)`` and ``grad_v(x)`` where ``x``
    has shape ``(n, *G)``; the latter returns ``(n, M, *G)``.
    """
    n, M = sys.n, sys.M
    if grid.n != n:
        raise InitializationError(f"grid dimension {grid.n} != system dimension {n}")
    coords = grid.coordinates()
    x = np.stack([1.0 - coords[0]] + list(coords[1:]))
    psi = np.asarray(profiles.psi(x), dtype=float) * np.ones(grid.shape)
    v = np.asarray(profiles.v(x), dtype=float).reshape((M,) + grid.shape)
    grad_v = np.asarray(profiles.grad_v(x), dtype=float).reshape((n, M) + grid.shape)
    if not (np.isfinite(psi).all() and np.isfinite(v).all() and np.isfinite(grad_v).all()):
        bad = ~np.isfinite(psi) | ~np.isfinite(v).all(axis=0) | ~np.isfinite(grad_v).all(axis=(0, 1))
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InitializationError(f"non-finite initial data at node {idx}")

    L = np.asarray(sys.L_components(psi, v), dtype=float)
    V = np.zeros((n + 1, M) + grid.shape)
    V[1:] = grad_v
    if M:
        A = np.asarray(sys.A_matrices(psi, v), dtype=float)
        A0 = _last(A[0], 2)
        cond = np.linalg.cond(A0)
        if not np.all(cond < 1e12):
            idx = tuple(int(i) for i in np.argwhere(~(cond < 1e12))[0])
            raise InitializationError(f"A^0 singular at node {idx}")
        rhs = np.einsum("aIJ...,aJ...->I...", A[1:], grad_v)
        V[0] = -_first(np.linalg.solve(A0, _last(rhs, 1)[..., None])[..., 0], 1)

    mu = 1.0 / L[1]
    xi = np.zeros((n,) + grid.shape)
    xi[0] = -mu
    theta = np.zeros((n - 1, n) + grid.shape)
    for i in range(n - 1):
        theta[i, i + 1] = 1.0
    Xi = mu * L[1:]
    Xi[0] -= 1.0
    return GeometricState(x=x, Psi=psi, v=v, V=V, mu=mu, xi=xi, Theta=theta, Xi_cart=Xi, t=0.0)


@dataclass
class FrameExpansion:
    f: np.ndarray            # (n-1, n, *G): d_j = xi_j X + sum_i f[i, j] Theta_i
    inverse: np.ndarray      # (*G, n, n) inverse of [X | Theta_2 | ... | Theta_n]
    xi_solved: np.ndarray    # (n, *G) first row of the inverse
    residual: float          # Kronecker reconstruction residual
    xi_mismatch: float       # max |xi_solved - xi|
    cond: np.ndarray         # (*G,) condition numbers


def frame_matrix(node, L):
    """Columns X, Theta_2..Theta_n as an array of shape (*G, n, n)."""
    n = node.xi.shape[0]
    cols = [-L[1:]] + [node.Theta[i] for i in range(n - 1)]
    mat = np.stack(cols, axis=1)  # (n rows k, n cols, *G)
    return _last(mat, 2)


def small_inverse(mat):
    """Batched inverse of (*G, k, k) matrices with closed forms for k <= 2."""
    k = mat.shape[-1]
    if k == 1:
        return 1.0 / mat
    if k == 2:
        a, b = mat[..., 0, 0], mat[..., 0, 1]
        c, d = mat[..., 1, 0], mat[..., 1, 1]
        det = a * d - b * c
        inv = np.empty_like(mat)
        inv[..., 0, 0], inv[..., 0, 1] = d / det, -b / det
        inv[..., 1, 0], inv[..., 1, 1] = -c / det, a / det
        return inv
    return np.linalg.inv(mat)


def frame_expansion(node, sys=None, L=None, check=True) -> FrameExpansion:
    """Coefficients f_ij of d_j = xi_j X + sum_i f_ij Theta_i.

    The condition number is measured in the Frobenius norm.
    """
    if L is None:
        L = node.L(sys)
    n = node.xi.shape[0]
    mat = frame_matrix(node, L)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = small_inverse(mat)
        cond = np.linalg.norm(mat, axis=(-2, -1)) * np.linalg.norm(inv, axis=(-2, -1))
    cond = np.where(np.isfinite(cond), cond, np.inf)
    if check and not np.all(cond < COND_MAX):
        idx = tuple(int(i) for i in np.argwhere(~(cond < COND_MAX))[0]) if np.ndim(cond) else ()
        raise FrameDegeneracyError(f"frame condition number above {COND_MAX:g} at node {idx}")
    xi_solved = _first(inv[..., 0, :], 1)
    f = _first(inv[..., 1:, :], 2)
    recon = np.einsum("...j,...k->...jk", inv[..., 0, :], mat[..., :, 0])
    recon = recon + np.einsum("...ij,...ki->...jk", inv[..., 1:, :], mat[..., :, 1:])
    residual = float(np.max(np.abs(recon - np.eye(n))))
    mismatch = float(np.max(np.abs(xi_solved - node.xi)))
    return FrameExpansion(f, inv, xi_solved, residual, mismatch, cond)


def cartesian_gradient(node, Lf, Xbrf, Thf, f=None, sys=None, weighted=False, mu_floor=MU_FLOOR):
    """Cartesian gradient (d_t, d_1, ..., d_n) from frame derivatives.

    ``Thf`` has shape ``(n-1, *G)``.  With ``weighted=True`` the result is
    mu * d_alpha, which stays bounded as mu -> 0.
    """
    mu = np.asarray(node.mu, dtype=float)
    if f is None:
        f = frame_expansion(node, sys).f
    Lf = np.asarray(Lf, dtype=float)
    Xbrf = np.asarray(Xbrf, dtype=float)
    Thf = np.asarray(Thf, dtype=float)
    tang = np.einsum("ij...,i...->j...", f, Thf) if f.shape[0] else np.zeros_like(node.xi)
    if weighted:
        out0 = mu * Lf + Xbrf
        outj = node.xi * Xbrf + mu * tang
    else:
        if np.any(mu <= mu_floor):
            raise MuFloorError(f"mu <= {mu_floor} in unweighted mode; use weighted=True")
        out0 = Lf + Xbrf / mu
        outj = node.xi * (Xbrf / mu) + tang
    return np.concatenate([out0[None], outj], axis=0)


def frame_derivatives(node, grad, L):
    """Inverse of cartesian_gradient: (Lf, Xbr f, Theta_i f) from d_alpha f."""
    Lf = np.einsum("a...,a...->...", L, grad)
    Xbrf = -node.mu * np.einsum("j...,j...->...", L[1:], grad[1:])
    Thf = np.einsum("ij...,j...->i...", node.Theta, grad[1:])
    return Lf, Xbrf, Thf


def jacobian(node, sys=None, L=None):
    """d(x^0..x^n)/d(t,u,theta): matrix (*G, n+1, n+1), det, angular det."""
    if L is None:
        L = node.L(sys)
    n = node.xi.shape[0]
    shape = node.mu.shape
    J = np.zeros(shape + (n + 1, n + 1))
    J[..., 0, 0] = 1.0
    for j in range(1, n + 1):
        J[..., j, 0] = L[j]
        J[..., j, 1] = -node.mu * L[j] + node.Xi_cart[j - 1]
        for i in range(n - 1):
            J[..., j, 2 + i] = node.Theta[i, j - 1]
    det = np.linalg.det(J)
    if n > 1:
        det_ang = np.linalg.det(_last(node.Theta[:, 1:], 2))
    else:
        det_ang = np.ones(shape)
    return J, det, det_ang


def xi_theta_components(node):
    """Coefficients c_i with Xi = sum_i c_i Theta_i (least squares)."""
    n = node.xi.shape[0]
    if n == 1:
        return np.zeros((0,) + node.mu.shape)
    if n == 2:
        th = node.Theta[0]
        return (np.sum(th * node.Xi_cart, axis=0) / np.sum(th * th, axis=0))[None]
    th = _last(node.Theta, 2)  # (*G, n-1, n)
    gram = th @ np.swapaxes(th, -1, -2)
    rhs = th @ _last(node.Xi_cart, 1)[..., None]
    return _first(np.linalg.solve(gram, rhs)[..., 0], 1)


def contraction_residuals(node, sys=None, L=None):
    """Per-node residuals of L.xi = -1, X.xi = 1, Theta_i.xi = 0, Xi.xi = 0."""
    if L is None:
        L = node.L(sys)
    Lxi = np.einsum("j...,j...->...", L[1:], node.xi)
    return {
        "L_xi": Lxi + 1.0,
        "X_xi": -Lxi - 1.0,
        "Theta_xi": np.einsum("ij...,j...->i...", node.Theta, node.xi),
        "Xi_xi": np.einsum("j...,j...->...", node.Xi_cart, node.xi),
    }


def gamma(node):
    """The small-quantity array (Psi, v, V, xi_small, Theta_small) stacked per node."""
    shape = node.mu.shape
    parts = [node.Psi[None], node.v.reshape((-1,) + shape), node.V.reshape((-1,) + shape),
             node.xi_small, node.Theta_small.reshape((-1,) + shape)]
    return np.concatenate(parts, axis=0)


# snapshot serialization ---------------------------------------------------


def snapshot_columns(n, M):
    cols = ["t", "u"] + [f"theta_{i}" for i in range(2, n + 1)]
    cols += [f"x_{j}" for j in range(1, n + 1)] + [f"wind_{i}" for i in range(2, n + 1)]
    cols += ["Psi"] + [f"v_{J}" for J in range(1, M + 1)]
    cols += [f"V_{a}_{J}" for a in range(n + 1) for J in range(1, M + 1)]
    cols += ["mu"] + [f"xi_{j}" for j in range(1, n + 1)]
    cols += [f"Theta_{i}_{j}" for i in range(2, n + 1) for j in range(1, n + 1)]
    cols += [f"Xi_{j}" for j in range(1, n + 1)]
    return cols


def _flat(a, k):
    return a.reshape((a.shape[0] if k else 1, -1)) if k else a.reshape(1, -1)


def write_snapshot_csv(path, state: GeometricState, grid: GridSpec):
    n, M = grid.n, state.v.shape[0]
    coords = grid.coordinates()
    size = int(np.prod(grid.shape))
    xw = state.x_wrapped
    rows = [np.full(size, state.t)] + [c.ravel() for c in coords]
    rows += [xw[j].ravel() for j in range(n)] + [state.winding[i].ravel() for i in range(n - 1)]
    rows += [state.Psi.ravel()] + [state.v[J].ravel() for J in range(M)]
    rows += [state.V[a, J].ravel() for a in range(n + 1) for J in range(M)]
    rows += [state.mu.ravel()] + [state.xi[j].ravel() for j in range(n)]
    rows += [state.Theta[i, j].ravel() for i in range(n - 1) for j in range(n)]
    rows += [state.Xi_cart[j].ravel() for j in range(n)]
    data = np.stack(rows, axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(snapshot_columns(n, M))
        for row in data:
            w.writerow([repr(float(x)) for x in row])


def read_snapshot_csv(path, grid: GridSpec, M: int) -> GeometricState:
    n = grid.n
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    if header != snapshot_columns(n, M):
        raise ValueError(f"unexpected snapshot columns in {Path(path).name}")
    col = {name: data[:, k].reshape(grid.shape) for k, name in enumerate(header)}
    x = np.stack([col[f"x_{j}"] for j in range(1, n + 1)])
    for i in range(2, n + 1):
        x[i - 1] += col[f"wind_{i}"]
    return GeometricState(
        t=float(data[0, 0]),
        x=x,
        Psi=col["Psi"],
        v=np.stack([col[f"v_{J}"] for J in range(1, M + 1)]) if M else np.zeros((0,) + grid.shape),
        V=np.array([[col[f"V_{a}_{J}"] for J in range(1, M + 1)] for a in range(n + 1)]).reshape((n + 1, M) + grid.shape),
        mu=col["mu"],
        xi=np.stack([col[f"xi_{j}"] for j in range(1, n + 1)]),
        Theta=np.array([[col[f"Theta_{i}_{j}"] for j in range(1, n + 1)] for i in range(2, n + 1)]).reshape((n - 1, n) + grid.shape),
        Xi_cart=np.stack([col[f"Xi_{j}"] for j in range(1, n + 1)]),
    )
