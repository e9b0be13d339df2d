"""Gaussian velocity quadrature, Gibbs-measure spatial quadrature and the
spectral constants built from them.

Spatial integrals are taken against ``dmu = e^{-phi(x)} dx`` on the potential's
truncation box with a tensor composite Gauss-Legendre rule whose panels are
graded geometrically away from the origin; ``e^{-phi}`` is folded into the
weights.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import hermite_e, legendre

from .polynomial import Polynomial
from .potential import Potential, potential_minimum, truncation_box

GAUSSIAN = "gaussian-velocity"
GIBBS = "gibbs-spatial"
BOUNDARY_WARN = 1e-12
# the symmetrized double sums are literal O(N^2); refuse beyond this many pairs
MAX_DOUBLE_PAIRS = 2_000_000_000


class InsufficientDegree(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    measure: str
    degree: Optional[int] = None          # per-axis polynomial exactness (velocity rules)
    raw_mass: float = float("nan")        # sum of weights
    boundary_weight: float = 0.0          # max of e^{-phi} on the box boundary relative to its max
    box: tuple = ()

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def integrate(self, values) -> np.ndarray:
        """Sum ``weights * values`` over nodes (first axis of ``values``)."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))


def _tensor(points_1d, weights_1d, n):
    grids = np.meshgrid(*([points_1d] * n), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([weights_1d] * n), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


@functools.lru_cache(maxsize=None)
def hermite_rule(m: int, n: int) -> QuadratureRule:
    """Tensor Gauss-Hermite rule for the normalized Gaussian ``M(xi) dxi``."""
    if m < 1 or n < 1:
        raise ValueError("hermite_rule needs m >= 1 and n >= 1")
    x, w = hermite_e.hermegauss(m)
    w = w / math.sqrt(2 * math.pi)
    nodes, weights = _tensor(x, w, n)
    return QuadratureRule(_frozen(nodes), _frozen(weights), GAUSSIAN, degree=2 * m - 1,
                          raw_mass=float(weights.sum()))


def velocity_moment(p: Polynomial, rule: QuadratureRule) -> float:
    """``int p(xi) M(xi) dxi`` with a Gauss-Hermite rule of sufficient degree."""
    if rule.measure != GAUSSIAN:
        raise ValueError("velocity_moment needs a gaussian-velocity rule")
    if p.n != rule.dim:
        raise ValueError("polynomial and rule dimensions differ")
    need = max(p.axis_degree(k) for k in range(p.n))
    if need > rule.degree:
        raise InsufficientDegree(f"rule exact to per-axis degree {rule.degree}, polynomial needs {need}")
    return float(rule.integrate(p(rule.nodes)))


def gaussian_constants(n: int, m: int = 16):
    """``(A1, A2) = (int |xi|^2 M, int |xi|^4 M)``."""
    rule = hermite_rule(m, n)
    r2 = Polynomial.norm_squared(n)
    return velocity_moment(r2, rule), velocity_moment(r2 * r2, rule)


def graded_panels(half_width: float, first: float = 1.0) -> np.ndarray:
    """Panel edges on ``[0, half_width]``: widths doubling from ``h0`` up to a cap."""
    h0 = min(first, half_width / 16)
    cap = half_width / 8
    edges = [0.0, h0]
    width = h0
    while edges[-1] + width < half_width:
        edges.append(edges[-1] + width)
        width = min(2 * width, cap)
    if half_width - edges[-1] < 0.5 * (edges[-1] - edges[-2]) and len(edges) > 2:
        edges.pop()
    edges.append(half_width)
    return np.array(edges)


def composite_legendre(half_width: float, nodes_per_panel: int):
    """Symmetric composite Gauss-Legendre rule on ``[-half_width, half_width]``."""
    t, w = legendre.leggauss(nodes_per_panel)
    edges = graded_panels(half_width)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * t + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    return np.concatenate([-x[::-1], x]), np.concatenate([w[::-1], w])


def _boundary_weight(phi: Potential, half, vmin, samples=64):
    worst = 0.0
    n = phi.n
    ts = np.linspace(-1, 1, samples)
    face = np.stack(np.meshgrid(*([ts] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1) if n > 1 \
        else np.zeros((1, 0))
    for k in range(n):
        for sign in (-1.0, 1.0):
            pts = np.empty((len(face), n))
            others = [j for j in range(n) if j != k]
            pts[:, others] = face * np.asarray(half)[others]
            pts[:, k] = sign * half[k]
            worst = max(worst, float(np.max(np.exp(-(phi(pts) - vmin)))))
    return worst


@functools.lru_cache(maxsize=32)
def gibbs_rule(phi: Potential, nodes_per_panel: int = 8, box_scale: float = 1.0) -> QuadratureRule:
    """Tensor composite Gauss-Legendre rule with weights ``w_k e^{-phi(x_k)}``."""
    half = np.asarray(truncation_box(phi)) * box_scale
    axes = [composite_legendre(h, nodes_per_panel) for h in half]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    vmin = potential_minimum(phi)
    weights = w * np.exp(-(phi(nodes) - vmin)) * math.exp(-(vmin + 0.0))
    return QuadratureRule(_frozen(nodes), _frozen(weights), GIBBS, raw_mass=float(weights.sum()),
                          boundary_weight=_boundary_weight(phi, half, vmin), box=tuple(half))


def gibbs_integral(phi: Potential, g: Callable, rule: Optional[QuadratureRule] = None):
    """``int g(x) e^{-phi(x)} dx`` over the truncation box.

    ``g`` maps an ``(N, n)`` array of points to ``(N,)`` or ``(N, k)`` values.
    """
    if rule is None:
        rule = gibbs_rule(phi)
    if rule.boundary_weight > BOUNDARY_WARN:
        warnings.warn(f"truncation box boundary carries relative weight {rule.boundary_weight:.2e}",
                      RuntimeWarning, stacklevel=2)
    out = rule.integrate(g(rule.nodes))
    return float(out) if np.ndim(out) == 0 else out


# -- spectral constants ------------------------------------------------------------

@dataclass(frozen=True)
class SpectralConstants:
    """The constants of the macroscopic system.

    Naming: ``lambda_ab`` is lambda with subscript ``a`` and superscript ``b``
    (so ``lambda_31`` is the mass of the Gibbs measure, equal to 1).
    """

    n: int
    A1: float
    A2: float
    lambda_11: float
    lambda_12: float
    lambda_21: float
    lambda_22: float
    lambda_31: float
    lambda_32: float
    lambda_41: np.ndarray = field(compare=False)
    lambda_42: np.ndarray = field(compare=False)
    Lambda_numerator: float = 0.0
    denominator: float = 0.0
    V_numerator: np.ndarray = field(default=None, compare=False)
    Lambda_phi: float = 0.0
    V_phi: np.ndarray = field(default=None, compare=False)

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = [float(t) for t in v] if isinstance(v, np.ndarray) else v
        return out


class InconsistentConstants(QuadratureError):
    pass


def spectral_constants(phi: Potential, rule: Optional[QuadratureRule] = None,
                       hermite_nodes: int = 16) -> SpectralConstants:
    if rule is None:
        rule = gibbs_rule(phi)
    n = phi.n
    A1, A2 = gaussian_constants(n, hermite_nodes)
    x = rule.nodes
    p = phi(x)
    r2 = np.sum(x * x, axis=1)
    I = rule.integrate
    l11 = A1 + 2 * I(p)
    l12 = 2 * I(p * p + A1 * p + A2 / 4)
    l21 = 0.5 * I(r2)
    l22 = 0.5 * I(r2 * (A1 / 2 + p))
    l31 = I(np.ones_like(p))
    l32 = I(A1 / 2 + p)
    l41 = I(x)
    l42 = I((A1 / 2 + p)[:, None] * x)
    num = l22 - l21 * l32
    den = l12 - l11 * l32
    vnum = l42 - l41 * l32
    if not den > 0:
        raise InconsistentConstants(f"lambda_12 - lambda_11 lambda_32 = {den!r} is not positive")
    return SpectralConstants(
        n=n, A1=float(A1), A2=float(A2), lambda_11=float(l11), lambda_12=float(l12),
        lambda_21=float(l21), lambda_22=float(l22), lambda_31=float(l31), lambda_32=float(l32),
        lambda_41=np.asarray(l41), lambda_42=np.asarray(l42), Lambda_numerator=float(num),
        denominator=float(den), V_numerator=np.asarray(vnum), Lambda_phi=float(-num / den),
        V_phi=np.asarray(vnum / den))


# -- two-route identity check ------------------------------------------------------------

def _double_sum(rule: QuadratureRule, u: np.ndarray, v: np.ndarray, chunk: int = 256):
    """Literal ``sum_{k,l} w_k w_l (u_k - u_l)(v_k - v_l)`` for scalar ``u`` and
    scalar or vector ``v``."""
    N = rule.size
    if N * N > MAX_DOUBLE_PAIRS:
        raise QuadratureError(f"double-integral route needs {N * N:.2e} node pairs; use a coarser rule")
    w = rule.weights
    v2 = v if v.ndim == 2 else v[:, None]
    total = np.zeros(v2.shape[1])
    for s in range(0, N, chunk):
        du = u[s:s + chunk, None] - u[None, :]                    # (c, N)
        for k in range(v2.shape[1]):
            dv = v2[s:s + chunk, k, None] - v2[None, :, k]
            dv *= du
            total[k] += w[s:s + chunk] @ (dv @ w)
    return total if v.ndim == 2 else float(total[0])


@dataclass(frozen=True)
class ThreeRouteReport:
    denominator_direct: float
    denominator_single: float
    denominator_double: float
    Lambda_numerator_direct: float
    Lambda_numerator_single: float
    Lambda_numerator_double: float
    V_numerator_direct: np.ndarray = field(compare=False)
    V_numerator_single: np.ndarray = field(compare=False)
    V_numerator_double: np.ndarray = field(compare=False)
    rel_disagreement_Lambda: float = 0.0
    rel_disagreement_V: float = 0.0
    rel_disagreement_denominator: float = 0.0
    denominator_positive: bool = True
    tolerance: float = 1e-5

    @property
    def agree(self) -> bool:
        return max(self.rel_disagreement_Lambda, self.rel_disagreement_V,
                   self.rel_disagreement_denominator) <= self.tolerance

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = [float(t) for t in v] if isinstance(v, np.ndarray) else v
        out["agree"] = self.agree
        return out


def three_route_check(phi: Potential, rule: Optional[QuadratureRule] = None,
                  constants: Optional[SpectralConstants] = None, tol: float = 1e-5) -> ThreeRouteReport:
    """Evaluate the three constant combinations by the defining integrals, by the
    covariance (single-integral) forms and by the symmetrized double integrals.

    Relative disagreement is measured against the Cauchy-Schwarz scale of the
    covariance (for example ``sqrt(Var phi Var |x|^2)``), so quantities that
    vanish by symmetry are compared on a meaningful scale.
    """
    if rule is None:
        rule = gibbs_rule(phi)
    if constants is None:
        constants = spectral_constants(phi, rule)
    A1, A2 = constants.A1, constants.A2
    x = rule.nodes
    p = phi(x)
    r2 = np.sum(x * x, axis=1)
    I = rule.integrate
    mass = I(np.ones_like(p))
    mp, mr2, mx = I(p) / mass, I(r2) / mass, I(x) / mass
    var_p = I((p - mp) ** 2) / mass
    var_r2 = I((r2 - mr2) ** 2) / mass
    var_x = I((x - mx) ** 2) / mass

    den_single = 2 * (var_p + (A2 - A1 * A1) / 4)
    lam_single = 0.5 * I((r2 - mr2) * (p - mp))
    v_single = I((p - mp)[:, None] * (x - mx))

    den_double = 2 * (0.5 * _double_sum(rule, p, p) + (A2 - A1 * A1) / 4)
    lam_double = 0.25 * _double_sum(rule, p, r2)
    v_double = 0.5 * _double_sum(rule, p, x)

    def rel(a, b, scale):
        a, b = np.atleast_1d(a), np.atleast_1d(b)
        return float(np.max(np.abs(a - b) / np.maximum(scale, 1e-300)))

    s_lam = 0.5 * math.sqrt(var_p * var_r2)
    s_v = np.sqrt(var_p * var_x)
    s_den = den_single
    d_lam = max(rel(constants.Lambda_numerator, lam_single, s_lam), rel(lam_single, lam_double, s_lam))
    d_v = max(rel(constants.V_numerator, v_single, s_v), rel(v_single, v_double, s_v))
    d_den = max(rel(constants.denominator, den_single, s_den), rel(den_single, den_double, s_den))
    return ThreeRouteReport(
        denominator_direct=constants.denominator, denominator_single=float(den_single),
        denominator_double=float(den_double), Lambda_numerator_direct=constants.Lambda_numerator,
        Lambda_numerator_single=float(lam_single), Lambda_numerator_double=float(lam_double),
        V_numerator_direct=constants.V_numerator, V_numerator_single=np.asarray(v_single),
        V_numerator_double=np.asarray(v_double), rel_disagreement_Lambda=d_lam,
        rel_disagreement_V=d_v, rel_disagreement_denominator=d_den,
        denominator_positive=bool(constants.denominator > 0 and den_double > 0), tolerance=tol)
