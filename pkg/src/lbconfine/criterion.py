"""Zero-solution criterion for the macroscopic transport system.

A field ``z = (a + b.xi + c |xi|^2) M_phi^{1/2}`` solves the collisionless
transport equation iff ``(a, b, c)`` satisfy

    da/dt - grad(phi).b = 0,          db/dt + grad(a) - 2 c grad(phi) = 0,
    dc/dt + d_i b_i = 0 (each i),     d_j b_i + d_i b_j = 0 (i != j),
    grad(c) = 0,

and the conservation laws become three integral constraints against the
Gibbs measure.  Whether only ``z = 0`` survives is reduced to the rank of the
extended family ``{1, x_i, |x|^2, d_i phi, angular terms, 2 phi + x.grad phi}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .admissibility import (DEFAULT_THRESHOLDS, Member, Status, Thresholds, _jsonable,
                            exact_independence, extended_family, gram_independence)
from .polynomial import coefficient_matrix
from .potential import AngularPairSet, PolynomialPotential, Potential, box_samples, compute_S_phi, virial
from .quadrature import QuadratureRule, SpectralConstants, gibbs_rule, spectral_constants

COLLOCATION_FACTOR = 4
WITNESS_TOL = 1e-8


@dataclass
class CriterionSystem:
    labels: List[str]
    members: List[Member] = field(repr=False)
    matrix: np.ndarray
    method: str
    nullspace: List[np.ndarray]
    smallest_singular_value: float
    status: Status
    exact_matrix: Optional[list] = field(default=None, repr=False)

    @property
    def nullity(self) -> int:
        return len(self.nullspace)

    def combination(self, coeffs, x) -> np.ndarray:
        """``sum_k coeffs[k] * member_k(x)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return sum(c * m.func(x) for c, m in zip(coeffs, self.members) if c != 0)

    def coefficients(self, **named) -> np.ndarray:
        """Coefficient vector from member labels, e.g. ``coefficients(**{"1": C, "|x|^2": 1})``."""
        v = np.zeros(len(self.labels))
        for k, val in named.items():
            v[self.labels.index(k)] = val
        return v

    def to_dict(self):
        return _jsonable({"labels": self.labels, "method": self.method, "status": self.status,
                          "nullity": self.nullity, "nullspace": [list(v) for v in self.nullspace],
                          "smallest_singular_value": self.smallest_singular_value,
                          "shape": list(self.matrix.shape)})


def assemble_criterion_matrix(phi: Potential, S: Optional[AngularPairSet] = None, seed: int = 0,
                              method: str = "auto", thresholds: Thresholds = DEFAULT_THRESHOLDS) -> CriterionSystem:
    """Exact monomial-coefficient matrix for polynomial ``phi``; otherwise a
    collocation matrix on ``4 x`` (family size) quasi-random box points."""
    S = compute_S_phi(phi) if S is None else S
    members = extended_family(phi, S)
    labels = [m.label for m in members]
    if method == "auto":
        method = "exact" if isinstance(phi, PolynomialPotential) else "collocation"
    if method == "exact":
        res = exact_independence(members)
        _, mat = coefficient_matrix([m.poly for m in members])
        _, exact = coefficient_matrix([m.poly for m in members], exact=True)
        null = [np.asarray(v) for v in res.nullspace]
        return CriterionSystem(labels, members, mat, "exact-monomial", null, res.smallest_singular_value,
                               res.status, exact)
    pts = box_samples(phi, count=COLLOCATION_FACTOR * len(members), seed=seed)
    A = np.column_stack([m.func(pts) for m in members])
    res = gram_independence(members, pts, thresholds)
    norms = np.linalg.norm(A, axis=0)
    sv = np.linalg.svd(A / norms, compute_uv=False)
    return CriterionSystem(labels, members, A, "collocation", [np.asarray(v) for v in res.nullspace],
                           float(sv[-1]), res.status)


# -- macroscopic residuals ----------------------------------------------------------------

EQUATIONS = ("density", "momentum", "trace", "shear", "c_gradient")


def macroscopic_residual(t, a, b, c, phi: Potential, axes: Sequence[np.ndarray]) -> Dict[str, float]:
    """Max-norm residuals of the five macroscopic equations on a tensor grid.

    ``a``: (nt, N1..Nn); ``b``: (nt, N1..Nn, n); ``c``: (nt,) or (nt, N1..Nn).
    Time derivatives use the midpoint rule for two levels and second-order
    differences otherwise; space derivatives are second-order differences.
    """
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n = phi.n
    if len(t) < 2:
        raise ValueError("macroscopic_residual needs at least two time levels")
    shape = tuple(len(ax) for ax in axes)
    if c.ndim == 1:
        c = c.reshape((-1,) + (1,) * n) * np.ones((1,) + shape)
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    gphi = phi.grad(X)

    def dt(u):
        if len(t) == 2:
            return ((u[1] - u[0]) / (t[1] - t[0]))[None]
        return np.gradient(u, t, axis=0, edge_order=2)

    def at(u):
        return 0.5 * (u[:1] + u[1:2]) if len(t) == 2 else u

    def d(u, k):
        # u has leading time axis; spatial axis k is axis k+1
        return np.gradient(u, axes[k], axis=k + 1, edge_order=2)

    A, B, Cc = at(a), at(b), at(c)
    res = {}
    res["density"] = np.max(np.abs(dt(a) - np.sum(gphi * B, axis=-1)))
    grad_a = np.stack([d(A, k) for k in range(n)], axis=-1)
    res["momentum"] = np.max(np.abs(dt(b) + grad_a - 2 * Cc[..., None] * gphi))
    res["trace"] = max(np.max(np.abs(dt(c) + d(B[..., i], i))) for i in range(n))
    res["shear"] = max((np.max(np.abs(d(B[..., i], j) + d(B[..., j], i)))
                      for i in range(n) for j in range(i + 1, n)), default=0.0)
    res["c_gradient"] = max(np.max(np.abs(d(Cc, k))) for k in range(n))
    return {k: float(v) for k, v in res.items()}


# -- conservation functionals ----------------------------------------------------------------

def _values(g, x):
    return g(x) if callable(g) else np.broadcast_to(np.asarray(g, dtype=float), x.shape[:1])


def conservation_functionals(a, b, c, phi: Potential, constants: SpectralConstants,
                             S: Optional[AngularPairSet] = None,
                             rule: Optional[QuadratureRule] = None) -> dict:
    """Mass, angular and energy constraints for macroscopic fields.

    ``a`` and ``c`` are callables of ``x`` (shape (N, n)) or constants; ``b`` is a
    callable returning (N, n) or a constant vector.
    """
    S = compute_S_phi(phi) if S is None else S
    rule = gibbs_rule(phi) if rule is None else rule
    x = rule.nodes
    av = _values(a, x)
    cv = _values(c, x)
    bv = b(x) if callable(b) else np.broadcast_to(np.asarray(b, dtype=float), x.shape)
    p = phi(x)
    A1, A2 = constants.A1, constants.A2
    I = rule.integrate
    mass = float(I(av + A1 * cv))
    energy = float(I(A1 * av / 2 + A2 * cv / 2) + I((av + A1 * cv) * p))
    angular = {(i, j): float(I(x[:, i] * bv[:, j] - x[:, j] * bv[:, i])) for i, j in S.upper()}
    return {"mass": mass, "angular": angular, "energy": energy}


# -- witnesses ---------------------------------------------------------------------------------

@dataclass
class MacroscopicWitness:
    """Macroscopic fields with analytic derivatives.

    ``a(t, x)``, ``b(t, x)`` -> (N, n), ``c(t)``; derivatives ``a_t``, ``b_t``,
    ``c_t``, ``grad_a(t, x)`` -> (N, n), ``jac_b(t, x)`` -> (N, n, n) with
    ``jac_b[..., i, j] = d_j b_i``.
    """

    description: str
    a: Callable
    b: Callable
    c: Callable
    a_t: Callable
    b_t: Callable
    c_t: Callable
    grad_a: Callable
    jac_b: Callable
    parameters: dict = field(default_factory=dict)

    def residuals(self, phi: Potential, t: float, x) -> Dict[str, float]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        g = phi.grad(x)
        J = self.jac_b(t, x)
        n = phi.n
        res = {
            "density": np.abs(self.a_t(t, x) - np.sum(g * self.b(t, x), axis=1)),
            "momentum": np.abs(self.b_t(t, x) + self.grad_a(t, x) - 2 * self.c(t) * g),
            "trace": np.abs(self.c_t(t) + np.stack([J[:, i, i] for i in range(n)], axis=1)),
            "shear": np.abs(np.stack([J[:, i, j] + J[:, j, i] for i in range(n) for j in range(i + 1, n)], axis=1))
            if n > 1 else np.zeros(1),
            "c_gradient": np.zeros(1),       # c depends on t only
        }
        return {k: float(np.max(v)) for k, v in res.items()}

    def constraints(self, phi, constants, t, S=None, rule=None) -> dict:
        return conservation_functionals(lambda x: self.a(t, x), lambda x: self.b(t, x),
                                        self.c(t), phi, constants, S, rule)

    def to_dict(self):
        return _jsonable({"description": self.description, "parameters": self.parameters})


def breathing_witness(phi: Potential, constants: SpectralConstants, kappa: float) -> MacroscopicWitness:
    """Time-periodic solution built when ``Lambda (2 phi + x.grad phi) + |x|^2/2`` is constant.

    ``c = cos(w t)`` with ``w^2 = -1/Lambda``, ``b = -c' x``,
    ``a = 2 c phi + c''|x|^2/2 + d``, ``d = -c lambda_11 - c'' lambda_21``;
    ``kappa`` is the constant value of ``2 phi + x.grad phi - w^2 |x|^2 / 2``.
    """
    Lam = constants.Lambda_phi
    if not Lam < 0:
        raise ValueError("breathing mode needs Lambda_phi < 0")
    w = math.sqrt(-1.0 / Lam)
    l11, l21 = constants.lambda_11, constants.lambda_21
    n = phi.n

    def c(t): return math.cos(w * t)
    def c1(t): return -w * math.sin(w * t)
    def c2(t): return -w * w * math.cos(w * t)
    def c3(t): return w ** 3 * math.sin(w * t)
    def d(t): return -c(t) * l11 - c2(t) * l21
    def d1(t): return -c1(t) * l11 - c3(t) * l21
    def r2(x): return np.sum(x * x, axis=1)

    return MacroscopicWitness(
        description="breathing mode c=cos(wt), b=-c'(t) x, a=2c phi+c''|x|^2/2+d(t)",
        a=lambda t, x: 2 * c(t) * phi(x) + 0.5 * c2(t) * r2(x) + d(t),
        b=lambda t, x: -c1(t) * x,
        c=c,
        a_t=lambda t, x: 2 * c1(t) * phi(x) + 0.5 * c3(t) * r2(x) + d1(t),
        b_t=lambda t, x: -c2(t) * x,
        c_t=c1,
        grad_a=lambda t, x: 2 * c(t) * phi.grad(x) + c2(t) * x,
        jac_b=lambda t, x: np.broadcast_to(-c1(t) * np.eye(n), (x.shape[0], n, n)),
        parameters={"omega": w, "Lambda_phi": Lam, "kappa": kappa,
                    "d": "-cos(wt) lambda_11 + w^2 cos(wt) lambda_21"})


def steady_witness(phi: Potential, constants: SpectralConstants, drop=("mass",)) -> MacroscopicWitness:
    """Steady solution ``a = 2 c phi + d``, ``b = 0``, ``c`` constant that
    satisfies every constraint except those in ``drop``.

    Dropping the mass constraint leaves ``(c, d) = (lambda_32, -lambda_12)``;
    dropping mass and energy leaves ``a = 1``.
    """
    drop = set(drop)
    if drop == {"mass"}:
        cc, dd = constants.lambda_32, -constants.lambda_12
    elif drop == {"energy"}:
        cc, dd = 1.0, -constants.lambda_11
    elif drop == {"mass", "energy"}:
        cc, dd = 0.0, 1.0
    else:
        raise ValueError("drop must name 'mass', 'energy' or both")
    n = phi.n
    return MacroscopicWitness(
        description=f"steady mode a=2c phi+d, b=0, c={cc!r} (dropped: {sorted(drop)})",
        a=lambda t, x: 2 * cc * phi(x) + dd,
        b=lambda t, x: np.zeros_like(x),
        c=lambda t: cc,
        a_t=lambda t, x: np.zeros(x.shape[0]),
        b_t=lambda t, x: np.zeros_like(x),
        c_t=lambda t: 0.0,
        grad_a=lambda t, x: 2 * cc * phi.grad(x),
        jac_b=lambda t, x: np.zeros((x.shape[0], n, n)),
        parameters={"c": cc, "d": dd, "dropped": sorted(drop)})


UNIQUE_ZERO = "UNIQUE-ZERO"
NON_UNIQUE = "NON-UNIQUE"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class Verdict:
    verdict: str
    system: CriterionSystem
    angular_moments: Dict[tuple, float]
    witness: Optional[MacroscopicWitness] = None
    witness_residuals: Optional[dict] = None
    witness_constraints: Optional[dict] = None

    def to_dict(self):
        return _jsonable({
            "verdict": self.verdict, "system": self.system.to_dict(),
            "angular_moments": {f"{i + 1},{j + 1}": v for (i, j), v in self.angular_moments.items()},
            "witness": None if self.witness is None else self.witness.to_dict(),
            "witness_residuals": self.witness_residuals,
            "witness_constraints": None if self.witness_constraints is None else {
                "mass": self.witness_constraints["mass"], "energy": self.witness_constraints["energy"],
                "angular": {f"{i + 1},{j + 1}": v for (i, j), v in self.witness_constraints["angular"].items()}},
        })


def zero_solution_verdict(phi: Potential, constants: Optional[SpectralConstants] = None,
                          system: Optional[CriterionSystem] = None, seed: int = 0,
                          thresholds: Thresholds = DEFAULT_THRESHOLDS) -> Verdict:
    """UNIQUE-ZERO iff the extended family is independent and every pair of
    ``S_phi`` has a positive Gibbs moment ``int (x_i^2 + x_j^2) dmu``."""
    S = compute_S_phi(phi)
    constants = spectral_constants(phi) if constants is None else constants
    system = assemble_criterion_matrix(phi, S, seed, thresholds=thresholds) if system is None else system
    rule = gibbs_rule(phi)
    x = rule.nodes
    moments = {(i, j): float(rule.integrate(x[:, i] ** 2 + x[:, j] ** 2)) for i, j in S.upper()}
    if system.status is Status.INCONCLUSIVE:
        return Verdict(INCONCLUSIVE, system, moments)
    if system.status is Status.PASS and all(v > 0 for v in moments.values()):
        return Verdict(UNIQUE_ZERO, system, moments)
    witness = residuals = cons = None
    # the virial/|x|^2/1 dependence yields an explicit time-periodic witness
    pts = box_samples(phi, count=1000, seed=seed)
    Lam = constants.Lambda_phi
    if Lam < 0:
        kv = virial(phi, pts) + 0.5 / Lam * np.sum(pts * pts, axis=1)
        scale = 1 + np.max(np.abs(virial(phi, pts)))
        if (np.max(kv) - np.min(kv)) / scale < WITNESS_TOL:
            witness = breathing_witness(phi, constants, float(np.median(kv)))
            times = np.linspace(0.0, 2 * math.pi / witness.parameters["omega"], 7)
            residuals = {k: max(witness.residuals(phi, t, pts)[k] for t in times) for k in EQUATIONS}
            cons = witness.constraints(phi, constants, 0.3, S, rule)
    return Verdict(NON_UNIQUE, system, moments, witness, residuals, cons)
