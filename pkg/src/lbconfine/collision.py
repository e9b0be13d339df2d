"""Discrete-velocity linearized collision operator.

The operator is assembled from its weak form.  With ``F = f / sqrt(M)``,

    <L f, g> = 1/4 iiint B(xi - xi*, w) M M* dF dG  dw dxi dxi*,
    dF = F' + F*' - F - F*,

where ``B = |xi - xi*|^gamma q0 |cos theta|``.  On the velocity grid each
collision ``(xi_a, xi_b, w)`` contributes a rank-one term ``c v v^T``; the
post-collision values ``F'`` and ``F*'`` are read off by tensor quadratic
Lagrange interpolation, which reproduces the collision invariants
``1, xi_i, |xi|^2`` exactly.  The assembled matrix is therefore symmetric,
positive semidefinite and annihilates the discrete invariants up to rounding.
The grid function is taken to vanish outside the velocity box, so a
post-collision velocity that leaves the box contributes no gain; the loss part
of that collision is kept.  The small resulting conservation defect in the
tails is removed by projecting ``L`` onto the complement of the invariants.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from numpy.polynomial import hermite_e, legendre
from scipy import sparse

CACHE_VERSION = 1
KERNEL_REL_TOL = 1e-8
MAX_CORRECTION = 0.01


class CollisionBuildError(RuntimeError):
    pass


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centred tensor grid on ``[-R, R]^n``."""

    n: int
    m: int
    R: float = 6.0

    def __post_init__(self):
        if self.n < 1 or self.m < 3 or self.R <= 0:
            raise ValueError("velocity grid needs n >= 1, m >= 3, R > 0")

    @property
    def h(self) -> float:
        return 2 * self.R / self.m

    @property
    def axis(self) -> np.ndarray:
        return -self.R + (np.arange(self.m) + 0.5) * self.h

    @property
    def cell(self) -> float:
        return self.h ** self.n

    @property
    def size(self) -> int:
        return self.m ** self.n

    @property
    def shape(self):
        return (self.m,) * self.n

    @property
    def nodes(self) -> np.ndarray:
        g = np.meshgrid(*([self.axis] * self.n), indexing="ij")
        return np.stack([a.ravel() for a in g], axis=-1)

    def log_maxwellian(self) -> np.ndarray:
        xi = self.nodes
        return -0.5 * np.sum(xi * xi, axis=1) - 0.5 * self.n * math.log(2 * math.pi)

    def maxwellian(self) -> np.ndarray:
        return np.exp(self.log_maxwellian())

    def inner(self, f, g) -> float:
        return float(np.sum(f * g) * self.cell)


# -- angular quadrature --------------------------------------------------------------

def angular_rule(n: int, n_angle: int):
    """Quadrature over the collision sphere, restricted to ``u . w > 0``.

    Returns ``(cos_theta, directions_in_local_frame, weights)``: local frame has
    the relative velocity along the first axis.  Weights are doubled so that
    the rule integrates over the whole sphere for integrands even in ``w``.
    """
    t, w = legendre.leggauss(n_angle)
    if n == 2:
        theta = 0.5 * math.pi * t
        wt = 0.5 * math.pi * w * 2
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return np.cos(theta), dirs, wt
    if n == 3:
        theta = 0.25 * math.pi * (t + 1)                      # polar angle on [0, pi/2]
        wt = 0.25 * math.pi * w * np.sin(theta)
        n_psi = 2 * n_angle
        psi = 2 * math.pi * np.arange(n_psi) / n_psi
        th, ps = np.meshgrid(theta, psi, indexing="ij")
        ww = np.repeat(wt, n_psi) * (2 * math.pi / n_psi) * 2
        dirs = np.stack([np.cos(th).ravel(), (np.sin(th) * np.cos(ps)).ravel(),
                         (np.sin(th) * np.sin(ps)).ravel()], axis=-1)
        return np.cos(th).ravel(), dirs, ww
    raise ValueError("collision operator supports n = 2 or n = 3")


def angular_factor(n: int, n_angle: int = 64) -> float:
    """``int_{S^{n-1}} |cos theta| dw`` by the angular rule (4 for n=2, 2 pi for n=3)."""
    cos_t, _, w = angular_rule(n, n_angle)
    return float(np.sum(w * cos_t))


def _frames(u):
    """Orthonormal frames whose first column is ``u / |u|`` (rows of ``u`` nonzero)."""
    n = u.shape[1]
    e1 = u / np.linalg.norm(u, axis=1, keepdims=True)
    if n == 2:
        e2 = np.stack([-e1[:, 1], e1[:, 0]], axis=-1)
        return np.stack([e1, e2], axis=-1)
    # n == 3: complete with a vector not parallel to e1
    trial = np.where(np.abs(e1[:, :1]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    e2 = trial - np.sum(trial * e1, axis=1, keepdims=True) * e1
    e2 /= np.linalg.norm(e2, axis=1, keepdims=True)
    e3 = np.cross(e1, e2)
    return np.stack([e1, e2, e3], axis=-1)


# -- collision frequency ---------------------------------------------------------------

def build_nu(grid: VelocityGrid, gamma: float = 0.0, q0: float = 1.0, hermite_nodes: int = 32,
             n_angle: int = 64) -> np.ndarray:
    """``nu(xi) = q0 int |cos| dw * int |xi - xi*|^gamma M(xi*) dxi*``."""
    if gamma < 0 or q0 <= 0:
        raise ValueError("build_nu needs gamma >= 0 and q0 > 0")
    ang = q0 * angular_factor(grid.n, n_angle)
    if gamma == 0:
        return np.full(grid.size, ang)
    x, w = hermite_e.hermegauss(hermite_nodes)
    w = w / math.sqrt(2 * math.pi)
    g = np.meshgrid(*([x] * grid.n), indexing="ij")
    star = np.stack([a.ravel() for a in g], axis=-1)
    gw = np.prod(np.stack(np.meshgrid(*([w] * grid.n), indexing="ij"), axis=-1).reshape(-1, grid.n), axis=1)
    xi = grid.nodes
    out = np.empty(grid.size)
    for s in range(0, grid.size, 256):
        d = np.linalg.norm(xi[s:s + 256, None, :] - star[None], axis=-1)
        out[s:s + 256] = (d ** gamma) @ gw
    return ang * out


# -- stencils -----------------------------------------------------------------------

def _quadratic_stencil(grid: VelocityGrid, p):
    """Tensor 3-point Lagrange stencil for points ``p`` of shape (T, n).

    Returns flat node indices (T, 3^n) and weights (T, 3^n)."""
    m, h, n = grid.m, grid.h, grid.n
    pos = (p + grid.R) / h - 0.5                       # fractional node coordinate
    i0 = np.clip(np.rint(pos).astype(np.int64), 1, m - 2)
    s = pos - i0
    l = np.stack([0.5 * s * (s - 1), (1 - s) * (1 + s), 0.5 * s * (s + 1)], axis=-1)   # (T, n, 3)
    idx = np.zeros((p.shape[0], 1), dtype=np.int64)
    wts = np.ones((p.shape[0], 1))
    for k in range(n):
        ik = i0[:, k, None] + np.arange(-1, 2)[None, :]
        idx = (idx[:, :, None] * m + ik[:, None, :]).reshape(p.shape[0], -1)
        wts = (wts[:, :, None] * l[:, k, None, :]).reshape(p.shape[0], -1)
    return idx, wts


def _assemble_weak_form(grid: VelocityGrid, gamma: float, q0: float, n_angle: int,
                        chunk_pairs: int = 8192) -> np.ndarray:
    N = grid.size
    xi = grid.nodes
    logM = grid.log_maxwellian()
    cos_t, dirs_local, w_ang = angular_rule(grid.n, n_angle)
    Q = len(w_ang)
    ia, ib = np.triu_indices(N, k=1)
    L = np.zeros((N, N))
    for s in range(0, len(ia), chunk_pairs):
        a = ia[s:s + chunk_pairs]
        b = ib[s:s + chunk_pairs]
        u = xi[a] - xi[b]
        umag = np.linalg.norm(u, axis=1)
        frames = _frames(u)                                           # (P, n, n)
        omega = np.einsum("pij,qj->pqi", frames, dirs_local)          # (P, Q, n)
        shift = (umag[:, None] * cos_t[None, :])[..., None] * omega    # (u.w) w
        xp = xi[a][:, None, :] - shift
        xs = xi[b][:, None, :] + shift
        in_p = np.all(np.abs(xp) <= grid.R, axis=-1).ravel()
        in_s = np.all(np.abs(xs) <= grid.R, axis=-1).ravel()
        # c = (1/4) h^n (2 ordered) w_ang |u|^gamma q0 cos(theta) M_a M_b
        logc = (np.log(0.5 * grid.cell * q0) + gamma * np.log(umag)[:, None]
                + np.log(w_ang * cos_t)[None, :] + (logM[a] + logM[b])[:, None]).ravel()
        ta = np.repeat(a, Q)
        tb = np.repeat(b, Q)
        T = len(ta)
        sp_i, sp_w = _quadratic_stencil(grid, xp.reshape(T, -1))
        ss_i, ss_w = _quadratic_stencil(grid, xs.reshape(T, -1))
        # the grid function vanishes outside the box: no gain from escaping velocities
        sp_w[~in_p] = 0.0
        ss_w[~in_s] = 0.0
        cols = np.concatenate([ta[:, None], tb[:, None], sp_i, ss_i], axis=1)
        coef = np.concatenate([-np.ones((T, 2)), sp_w, ss_w], axis=1)
        # entries sqrt(c) / sqrt(M_k), evaluated in log space
        scale = np.exp(0.5 * (logc[:, None] - logM[cols]))
        rows = np.repeat(np.arange(T), cols.shape[1])
        V = sparse.csr_matrix(((coef * scale).ravel(), (rows, cols.ravel())), shape=(T, N))
        L += (V.T @ V).toarray()
    return 0.5 * (L + L.T)


# -- projection onto collision invariants ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class Projection:
    """Orthogonal projection onto span{sqrt(M), xi_i sqrt(M), |xi|^2 sqrt(M)}."""

    grid: VelocityGrid
    basis: np.ndarray           # (N, n+2), orthonormal in the discrete inner product

    @classmethod
    def for_grid(cls, grid: VelocityGrid) -> "Projection":
        xi = grid.nodes
        sq = np.sqrt(grid.maxwellian())
        raw = np.column_stack([sq] + [xi[:, k] * sq for k in range(grid.n)] + [np.sum(xi * xi, 1) * sq])
        q, _ = np.linalg.qr(raw * math.sqrt(grid.cell))
        return cls(grid, q / math.sqrt(grid.cell))

    def coefficients(self, f) -> np.ndarray:
        return np.asarray(f) @ self.basis * self.grid.cell

    def __call__(self, f) -> np.ndarray:
        return self.coefficients(f) @ self.basis.T

    def matrix(self) -> np.ndarray:
        return self.basis @ self.basis.T * self.grid.cell


def projection_P(op_or_grid, f) -> np.ndarray:
    grid = op_or_grid.grid if isinstance(op_or_grid, CollisionOperator) else op_or_grid
    return Projection.for_grid(grid)(f)


# -- operator -------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CollisionOperator:
    grid: VelocityGrid
    nu: np.ndarray
    K: np.ndarray
    gamma: float
    q0: float
    n_angle: int
    corrected: bool = True
    correction_magnitude: float = 0.0
    P: Projection = field(default=None, repr=False)

    @property
    def L(self) -> np.ndarray:
        return np.diag(self.nu) - self.K

    def apply(self, f) -> np.ndarray:
        """``L f`` for ``f`` with the velocity index last (flattened)."""
        f = np.asarray(f)
        return self.nu * f - f @ self.K.T

    def quadratic_form(self, f) -> float:
        return self.grid.inner(f, self.apply(f))

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.L))))

    def eig(self):
        return np.linalg.eigh(self.L)


def _key(grid, gamma, q0, n_angle):
    return f"v{CACHE_VERSION}_n{grid.n}_m{grid.m}_R{grid.R!r}_g{gamma!r}_q{q0!r}_a{n_angle}"


def build_collision_operator(grid: VelocityGrid, gamma: float = 0.0, q0: float = 1.0, n_angle: int = 12,
                             cache_dir: Optional[str] = None, correct: bool = True) -> CollisionOperator:
    """Assemble ``L = diag(nu) - K`` on ``grid``; optionally read/write a cache file."""
    if gamma < 0 or q0 <= 0:
        raise ValueError("collision operator needs gamma >= 0 and q0 > 0")
    path = None
    if cache_dir is not None:
        digest = hashlib.sha1(_key(grid, gamma, q0, n_angle).encode()).hexdigest()[:16]
        path = os.path.join(cache_dir, f"collision_{digest}.npz")
        if os.path.exists(path):
            op = load_operator(path)
            if op is not None and _key(op.grid, op.gamma, op.q0, op.n_angle) == _key(grid, gamma, q0, n_angle):
                return op
    L = _assemble_weak_form(grid, gamma, q0, n_angle)
    P = Projection.for_grid(grid)
    magnitude = 0.0
    if correct:
        Pm = P.matrix()
        I_P = np.eye(grid.size) - Pm
        Lc = I_P @ L @ I_P
        Lc = 0.5 * (Lc + Lc.T)
        norm = np.linalg.norm(L, 2)
        magnitude = float(np.linalg.norm(L - Lc, 2) / norm)
        if magnitude > MAX_CORRECTION:
            raise CollisionBuildError(f"conservation correction is {magnitude:.2%} of the operator norm; "
                                      "refine the velocity grid")
        L = Lc
    nu = build_nu(grid, gamma, q0)
    K = np.diag(nu) - L
    op = CollisionOperator(grid, nu, K, float(gamma), float(q0), int(n_angle), correct, magnitude, P)
    if path is not None:
        save_operator(op, path)
    return op


def save_operator(op: CollisionOperator, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp.npz"
    np.savez(tmp, version=CACHE_VERSION, n=op.grid.n, m=op.grid.m, R=op.grid.R, gamma=op.gamma, q0=op.q0,
             n_angle=op.n_angle, corrected=op.corrected, correction=op.correction_magnitude, nu=op.nu, K=op.K)
    os.replace(tmp, path)


def load_operator(path: str) -> Optional[CollisionOperator]:
    with np.load(path) as d:
        if int(d["version"]) != CACHE_VERSION:
            return None
        grid = VelocityGrid(int(d["n"]), int(d["m"]), float(d["R"]))
        return CollisionOperator(grid, d["nu"].copy(), d["K"].copy(), float(d["gamma"]), float(d["q0"]),
                                 int(d["n_angle"]), bool(d["corrected"]), float(d["correction"]),
                                 Projection.for_grid(grid))


# -- diagnostics ------------------------------------------------------------------------------

def kernel_dimension(op: CollisionOperator, rel_tol: float = KERNEL_REL_TOL) -> int:
    ev = np.linalg.eigvalsh(op.L)
    return int(np.sum(np.abs(ev) < rel_tol * np.max(np.abs(ev))))


def coercivity_lambda0(op: CollisionOperator) -> float:
    """Smallest ``lambda`` with ``L x = lambda diag(nu) x`` on the orthogonal
    complement of the collision invariants."""
    basis = op.P.basis * math.sqrt(op.grid.cell)          # Euclidean-orthonormal
    full, _ = np.linalg.qr(np.column_stack([basis, np.eye(op.grid.size)]))
    Qc = full[:, basis.shape[1]:]
    A = Qc.T @ op.L @ Qc
    B = Qc.T @ (op.nu[:, None] * Qc)
    lam = scipy.linalg.eigh(0.5 * (A + A.T), 0.5 * (B + B.T), eigvals_only=True, subset_by_index=[0, 0])
    lam0 = float(lam[0])
    if not lam0 > 0:
        raise CollisionBuildError(f"coercivity constant {lam0!r} is not positive")
    return lam0


def audit(op: CollisionOperator) -> dict:
    """Linear-algebra checks of the structural properties of ``L``."""
    L = op.L
    ev, vecs = np.linalg.eigh(L)
    rho = float(np.max(np.abs(ev)))
    sq = np.sqrt(op.grid.maxwellian())
    return {
        "n": op.grid.n, "m": op.grid.m, "R": op.grid.R, "gamma": op.gamma, "q0": op.q0,
        "n_angle": op.n_angle,
        "norm": float(np.linalg.norm(L, 2)),
        "spectral_radius": rho,
        "symmetry_residual": float(np.max(np.abs(op.K - op.K.T))),
        "min_eigenvalue": float(ev[0]),
        "kernel_dimension": int(np.sum(np.abs(ev) < KERNEL_REL_TOL * rho)),
        "kernel_residual_sqrtM": float(np.linalg.norm(op.apply(sq)) / (np.linalg.norm(sq) * rho)),
        "nu_min": float(np.min(op.nu)), "nu_max": float(np.max(op.nu)),
        "correction_magnitude": op.correction_magnitude,
        "lambda0": coercivity_lambda0(op),
    }
