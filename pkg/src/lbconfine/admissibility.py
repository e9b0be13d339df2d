"""Admissibility of a confining potential for exponential decay.

Checks, each with a certificate:

* (i)   every pair in ``S_phi`` is a pair in which ``phi`` is even;
* (ii)  ``{1, x_i, d_i phi, x_i d_j phi - x_j d_i phi for (i, j) not in S_phi}``
        is linearly independent;
* (iii) for even ``phi``, ``Lambda_phi (2 phi + x.grad phi) + |x|^2 / 2`` is not
        constant; otherwise one of two growth ratios tends to zero at infinity;
* (ii)' the extended family with ``|x|^2`` and ``2 phi + x.grad phi`` added is
        independent (an alternative to (ii) + (iii)).

The verdict is ``(i) and ((ii) and (iii) or (ii)')`` in three-valued logic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .polynomial import Polynomial, coefficient_matrix, fraction_nullspace
from .potential import (AngularPairSet, PolynomialPotential, Potential, angular_residual,
                        angular_residual_polynomial, box_samples, compute_S_phi, is_even,
                        is_even_in_pair, virial, virial_polynomial)
from .quadrature import SpectralConstants, spectral_constants

GRAM_DEPENDENT = 1e-8
GRAM_INDEPENDENT = 1e-6
CONSTANCY_TOL = 1e-6
N_SAMPLES = 1000
N_RAYS = 32
RAY_EXPONENTS = tuple(range(3, 13))
LIMIT_TOL = 0.05


@dataclass(frozen=True)
class Thresholds:
    """Decision thresholds of the numerical checks."""

    gram_dependent: float = GRAM_DEPENDENT
    gram_independent: float = GRAM_INDEPENDENT
    constancy: float = CONSTANCY_TOL
    limit: float = LIMIT_TOL


DEFAULT_THRESHOLDS = Thresholds()


class Status(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"

    def __and__(self, other):
        if Status.FAIL in (self, other):
            return Status.FAIL
        if Status.INCONCLUSIVE in (self, other):
            return Status.INCONCLUSIVE
        return Status.PASS

    def __or__(self, other):
        if Status.PASS in (self, other):
            return Status.PASS
        if Status.INCONCLUSIVE in (self, other):
            return Status.INCONCLUSIVE
        return Status.FAIL


@dataclass
class CheckResult:
    status: Status
    evidence: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status is Status.PASS

    def to_dict(self):
        return {"status": self.status.value, **_jsonable(self.evidence)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


# -- function families ---------------------------------------------------------------

@dataclass(frozen=True)
class Member:
    label: str
    func: Callable
    poly: Optional[Polynomial] = None


def _axis_label(k):
    return f"x{k + 1}"


def condition_ii_family(phi: Potential, S: Optional[AngularPairSet] = None) -> List[Member]:
    S = compute_S_phi(phi) if S is None else S
    return _family(phi, S, extended=False)


def extended_family(phi: Potential, S: Optional[AngularPairSet] = None) -> List[Member]:
    """``1, x_i, |x|^2, d_i phi, x_i d_j phi - x_j d_i phi ((i,j) not in S_phi, i<j), 2 phi + x.grad phi``."""
    S = compute_S_phi(phi) if S is None else S
    return _family(phi, S, extended=True)


def _family(phi, S, extended):
    n = phi.n
    poly = isinstance(phi, PolynomialPotential)
    out = [Member("1", lambda x: np.ones(x.shape[0]), Polynomial.constant(1.0, n))]
    for k in range(n):
        out.append(Member(_axis_label(k), lambda x, k=k: x[:, k], Polynomial.variable(k, n)))
    if extended:
        out.append(Member("|x|^2", lambda x: np.sum(x * x, axis=1), Polynomial.norm_squared(n)))
    grads = phi.gradient_polynomials() if poly else None
    for k in range(n):
        out.append(Member(f"d{k + 1}phi", lambda x, k=k: phi.grad(x)[:, k], grads[k] if poly else None))
    for i, j in S.complement_upper():
        out.append(Member(f"x{i + 1}d{j + 1}phi-x{j + 1}d{i + 1}phi",
                          lambda x, i=i, j=j: angular_residual(phi, i, j, x),
                          angular_residual_polynomial(phi, i, j) if poly else None))
    if extended:
        out.append(Member("2phi+x.grad(phi)", lambda x: virial(phi, x),
                          virial_polynomial(phi) if poly else None))
    return out


# -- independence tests ----------------------------------------------------------------

@dataclass
class IndependenceResult:
    status: Status
    method: str
    labels: List[str]
    nullspace: List[list]                  # basis vectors (coefficients per member)
    min_gram_eigenvalue: Optional[float] = None
    smallest_singular_value: Optional[float] = None

    def to_dict(self):
        return _jsonable({"status": self.status, "method": self.method, "labels": self.labels,
                          "nullspace": self.nullspace, "min_gram_eigenvalue": self.min_gram_eigenvalue,
                          "smallest_singular_value": self.smallest_singular_value})


def exact_independence(members: Sequence[Member]) -> IndependenceResult:
    """Exact rank of the monomial coefficient matrix over the rationals."""
    polys = [m.poly for m in members]
    _, mat = coefficient_matrix(polys, exact=True)
    null = fraction_nullspace(mat)
    _, fmat = coefficient_matrix(polys)
    scaled = fmat / np.linalg.norm(fmat, axis=0, keepdims=True)
    sv = np.linalg.svd(scaled, compute_uv=False)
    smin = float(sv[-1]) if fmat.shape[0] >= fmat.shape[1] else 0.0
    return IndependenceResult(Status.FAIL if null else Status.PASS, "exact-monomial-rank",
                              [m.label for m in members], [[float(v) for v in vec] for vec in null],
                              smallest_singular_value=smin)


def sample_points(phi: Potential, count: int = N_SAMPLES, seed: int = 0) -> np.ndarray:
    return box_samples(phi, count=count, seed=seed)


def gram_independence(members: Sequence[Member], points: np.ndarray,
                      thresholds: Thresholds = DEFAULT_THRESHOLDS) -> IndependenceResult:
    """Minimum eigenvalue of the normalized Gram matrix of the sampled family."""
    A = np.column_stack([m.func(points) for m in members])
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        k = int(np.argmin(norms))
        vec = [0.0] * len(members)
        vec[k] = 1.0
        return IndependenceResult(Status.FAIL, "sampled-gram", [m.label for m in members], [vec], 0.0, 0.0)
    An = A / norms
    G = An.T @ An
    w, V = np.linalg.eigh(G)
    lam = float(w[0])
    if lam < thresholds.gram_dependent:
        status = Status.FAIL
    elif lam > thresholds.gram_independent:
        status = Status.PASS
    else:
        status = Status.INCONCLUSIVE
    null = []
    if status is not Status.PASS:
        for k in np.nonzero(w < thresholds.gram_independent)[0]:
            v = V[:, k] / norms
            null.append(list(v / np.max(np.abs(v))))
    return IndependenceResult(status, "sampled-gram", [m.label for m in members], null,
                              min_gram_eigenvalue=lam, smallest_singular_value=float(np.sqrt(max(lam, 0.0))))


def independence(members: Sequence[Member], phi: Potential, seed: int = 0,
                 method: str = "auto", thresholds: Thresholds = DEFAULT_THRESHOLDS) -> IndependenceResult:
    if method == "auto":
        method = "exact" if all(m.poly is not None for m in members) else "gram"
    if method == "exact":
        return exact_independence(members)
    return gram_independence(members, sample_points(phi, seed=seed), thresholds)


# -- the conditions --------------------------------------------------------------------

def check_condition_i(phi: Potential, S: Optional[AngularPairSet] = None) -> CheckResult:
    """Every pair of ``S`` (default ``S_phi``) is a pair of joint evenness of ``phi``."""
    S = compute_S_phi(phi) if S is None else S
    for i, j in S.upper():
        if not is_even_in_pair(phi, i, j):
            return CheckResult(Status.FAIL, {"offending_pair": [i + 1, j + 1]})
    return CheckResult(Status.PASS, {"pairs_checked": [[i + 1, j + 1] for i, j in S.upper()]})


def check_condition_ii(phi: Potential, S: Optional[AngularPairSet] = None, seed: int = 0,
                       method: str = "auto", thresholds: Thresholds = DEFAULT_THRESHOLDS) -> CheckResult:
    res = independence(condition_ii_family(phi, S), phi, seed, method, thresholds)
    return CheckResult(res.status, {"independence": res.to_dict()})


def check_condition_ii_prime(phi: Potential, S: Optional[AngularPairSet] = None, seed: int = 0,
                             method: str = "auto", thresholds: Thresholds = DEFAULT_THRESHOLDS) -> CheckResult:
    res = independence(extended_family(phi, S), phi, seed, method, thresholds)
    return CheckResult(res.status, {"independence": res.to_dict()})


def even_branch_combination(phi: Potential, Lambda_phi: float, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return Lambda_phi * virial(phi, x) + 0.5 * np.sum(x * x, axis=-1)


def growth_ratios(phi: Potential, x) -> tuple:
    """The two ratios whose vanishing at infinity is the non-even condition."""
    x = np.asarray(x, dtype=float)
    v = virial(phi, x)
    g = np.linalg.norm(phi.grad(x), axis=-1)
    r2 = np.sum(x * x, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (v + g) / r2, (r2 + g) / v


def _ray_directions(n, count, seed):
    u = qmc.Halton(d=n, scramble=True, seed=seed).random(count)
    from scipy.special import erfinv
    g = erfinv(np.clip(2 * u - 1, -1 + 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def check_condition_iii(phi: Potential, constants: Optional[SpectralConstants] = None,
                        seed: int = 0, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> CheckResult:
    if is_even(phi):
        if constants is None:
            constants = spectral_constants(phi)
        pts = sample_points(phi, seed=seed)
        g = even_branch_combination(phi, constants.Lambda_phi, pts)
        spread = float((np.max(g) - np.min(g)) / (1 + abs(np.median(g))))
        status = Status.PASS if spread > thresholds.constancy else Status.FAIL
        return CheckResult(status, {"branch": "even-nonconstant", "relative_spread": spread,
                                    "tolerance": thresholds.constancy, "Lambda_phi": constants.Lambda_phi})
    dirs = _ray_directions(phi.n, N_RAYS, seed)
    radii = 2.0 ** np.array(RAY_EXPONENTS)
    pts = radii[None, :, None] * dirs[:, None, :]
    r1, r2 = growth_ratios(phi, pts)
    best = {}
    trending = False
    for name, ratios in (("limit-1", np.abs(r1)), ("limit-2", np.abs(r2))):
        ok = []
        for k, row in enumerate(ratios):
            tail = row[-3:]
            decreasing = bool(np.all(np.isfinite(tail)) and np.all(np.diff(tail) < 0))
            trending |= decreasing
            if decreasing and tail[-1] < thresholds.limit:
                ok.append(k)
        best[name] = {"rays_converging": len(ok),
                      "final_ratio_min": float(np.nanmin(ratios[:, -1])),
                      "example_ray": None if not ok else {"direction": dirs[ok[0]].tolist(),
                                                          "ratios": ratios[ok[0]].tolist()}}
    evidence = {"radii": radii.tolist(), "rays": N_RAYS, "tolerance": thresholds.limit, "limits": best}
    for name in ("limit-1", "limit-2"):
        if best[name]["rays_converging"]:
            return CheckResult(Status.PASS, {"branch": name, **evidence})
    status = Status.INCONCLUSIVE if trending else Status.FAIL
    return CheckResult(status, {"branch": "none", **evidence})


# -- aggregate -------------------------------------------------------------------------

ADMISSIBLE = "ADMISSIBLE"
NOT_ADMISSIBLE = "NOT ADMISSIBLE"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class AdmissibilityReport:
    cond_i: CheckResult
    cond_ii: CheckResult
    cond_iii: CheckResult
    cond_ii_prime: CheckResult
    S_phi: AngularPairSet
    Lambda_phi: float
    overall: Status

    @property
    def verdict(self) -> str:
        return {Status.PASS: ADMISSIBLE, Status.FAIL: NOT_ADMISSIBLE,
                Status.INCONCLUSIVE: INCONCLUSIVE}[self.overall]

    def to_dict(self):
        return {"verdict": self.verdict, "cond_i": self.cond_i.to_dict(), "cond_ii": self.cond_ii.to_dict(),
                "cond_iii": self.cond_iii.to_dict(), "cond_ii_prime": self.cond_ii_prime.to_dict(),
                "S_phi": self.S_phi.to_dict(), "Lambda_phi": self.Lambda_phi}


def admissibility_report(phi: Potential, constants: Optional[SpectralConstants] = None,
                         seed: int = 0, thresholds: Thresholds = DEFAULT_THRESHOLDS) -> AdmissibilityReport:
    S = compute_S_phi(phi, seed)
    if constants is None:
        constants = spectral_constants(phi)
    c1 = check_condition_i(phi, S)
    c2 = check_condition_ii(phi, S, seed, thresholds=thresholds)
    c3 = check_condition_iii(phi, constants, seed, thresholds)
    c2p = check_condition_ii_prime(phi, S, seed, thresholds=thresholds)
    overall = c1.status & ((c2.status & c3.status) | c2p.status)
    return AdmissibilityReport(c1, c2, c3, c2p, S, constants.Lambda_phi, overall)
