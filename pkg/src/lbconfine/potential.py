"""Confining potentials: polynomial, radial-power and separable-power forms.

All potentials are immutable. Indices of coordinates and of angular pairs are
0-based in the Python API (the pair ``(0, 1)`` is the x1-x2 plane); labels and
JSON reports use 1-based indices.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Tuple

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .polynomial import Polynomial

# e^{-phi} relative to its maximum must drop below this on the box boundary
TRUNCATION_LEVEL = 1e-14
# sampled sup of |x_i d_j phi - x_j d_i phi| below this counts as zero
ANGULAR_THRESHOLD = 1e-10
N_SYMMETRY_SAMPLES = 1000


class DimensionError(ValueError):
    pass


def _points(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DimensionError(f"point has dimension {x.shape[-1]}, potential has dimension {n}")
    return x


@dataclass(frozen=True)
class Potential:
    """Base class; ``C`` is the additive normalization constant."""

    n: int
    C: float = 0.0

    form = "abstract"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")

    def _raw(self, x):
        raise NotImplementedError

    def _raw_grad(self, x):
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        x = _points(x, self.n)
        return self._raw(x) + self.C

    def value(self, x) -> np.ndarray:
        return self(x)

    def grad(self, x) -> np.ndarray:
        x = _points(x, self.n)
        return self._raw_grad(x)

    def with_constant(self, C: float) -> "Potential":
        return dataclasses.replace(self, C=float(C))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PolynomialPotential(Potential):
    poly: Polynomial = field(default=None)

    form = "polynomial"

    def __post_init__(self):
        super().__post_init__()
        if self.poly is None or self.poly.n != self.n:
            raise ValueError("polynomial dimension must match n")

    def _raw(self, x):
        return self.poly(x)

    def _raw_grad(self, x):
        return np.stack([p(x) for p in self.gradient_polynomials()], axis=-1)

    @functools.lru_cache(maxsize=None)
    def gradient_polynomials(self) -> Tuple[Polynomial, ...]:
        return tuple(self.poly.grad())

    def full_polynomial(self) -> Polynomial:
        """The potential including ``C`` as a polynomial."""
        return self.poly + self.C

    def to_dict(self):
        return {"form": "polynomial", "n": self.n, "terms": self.poly.to_list(), "C": self.C}


@dataclass(frozen=True)
class RadialPowerPotential(Potential):
    """``beta * <x>**alpha + C`` with ``<x> = sqrt(1 + |x|^2)``."""

    beta: float = 1.0
    alpha: float = 1.0

    form = "radial"

    def __post_init__(self):
        super().__post_init__()
        if not (self.beta > 0 and self.alpha > 0):
            raise ValueError("radial power potential needs beta > 0 and alpha > 0")

    def _raw(self, x):
        return self.beta * (1.0 + np.sum(x * x, axis=-1)) ** (self.alpha / 2)

    def _raw_grad(self, x):
        bracket = 1.0 + np.sum(x * x, axis=-1)
        return (self.beta * self.alpha * bracket ** (self.alpha / 2 - 1))[..., None] * x

    def to_dict(self):
        return {"form": "radial", "n": self.n, "beta": self.beta, "alpha": self.alpha, "C": self.C}


@dataclass(frozen=True)
class SeparablePowerPotential(Potential):
    """``sum_i beta_i * <x_i>**alpha_i + C``."""

    betas: Tuple[float, ...] = ()
    alphas: Tuple[float, ...] = ()

    form = "separable"

    def __post_init__(self):
        super().__post_init__()
        if len(self.betas) != self.n or len(self.alphas) != self.n:
            raise ValueError("separable potential needs one beta and one alpha per axis")
        if min(self.betas) <= 0 or min(self.alphas) <= 0:
            raise ValueError("separable potential needs beta_i > 0 and alpha_i > 0")

    def _raw(self, x):
        b = np.asarray(self.betas)
        a = np.asarray(self.alphas)
        return np.sum(b * (1.0 + x * x) ** (a / 2), axis=-1)

    def _raw_grad(self, x):
        b = np.asarray(self.betas)
        a = np.asarray(self.alphas)
        return b * a * (1.0 + x * x) ** (a / 2 - 1) * x

    def to_dict(self):
        return {"form": "separable", "n": self.n, "betas": list(self.betas),
                "alphas": list(self.alphas), "C": self.C}


# -- presets --------------------------------------------------------------------

def polynomial(terms, n: int | None = None, C: float = 0.0) -> PolynomialPotential:
    p = terms if isinstance(terms, Polynomial) else Polynomial(terms, n)
    return PolynomialPotential(n=p.n, C=float(C), poly=p)


def harmonic(n: int = 2, C: float = 0.0) -> PolynomialPotential:
    """``|x|^2 / 2 + C``."""
    return polynomial(Polynomial.norm_squared(n) * 0.5, C=C)


def phi1(n: int = 2, beta: float = 1.0, alpha: float = 1.0, C: float = 0.0) -> RadialPowerPotential:
    return RadialPowerPotential(n=n, C=C, beta=float(beta), alpha=float(alpha))


def phi2(n: int = 2, betas=None, alphas=None, C: float = 0.0) -> SeparablePowerPotential:
    betas = tuple(float(b) for b in (betas if betas is not None else [1.0] * n))
    alphas = tuple(float(a) for a in (alphas if alphas is not None else [1.0 + 2 * k for k in range(n)]))
    return SeparablePowerPotential(n=n, C=C, betas=betas, alphas=alphas)


def phi3(n: int = 2, alphas=None, betas=None, C: float = 0.0) -> PolynomialPotential:
    """``sum_i alpha_i x_i^(2(i+1)) + sum_i beta_i x_i`` with 1-based ``i``."""
    alphas = list(alphas if alphas is not None else [1.0] * n)
    betas = list(betas if betas is not None else [1.0] * n)
    if min(alphas) <= 0 or any(b == 0 for b in betas):
        raise ValueError("phi3 needs alpha_i > 0 and beta_i != 0")
    terms = {}
    for k in range(n):
        e = [0] * n
        e[k] = 2 * (k + 2)
        terms[tuple(e)] = alphas[k]
        e = [0] * n
        e[k] = 1
        terms[tuple(e)] = betas[k]
    return polynomial(terms, n, C=C)


def quartic_separable(n: int = 2, C: float = 0.0) -> PolynomialPotential:
    """``sum_i x_i^4``, an even non-radial polynomial."""
    return polynomial({tuple(4 if j == k else 0 for j in range(n)): 1.0 for k in range(n)}, n, C=C)


PRESETS = {
    "harmonic": harmonic,
    "phi1": phi1,
    "phi2": phi2,
    "phi3": phi3,
    "quartic": quartic_separable,
}


def from_dict(spec: dict) -> Potential:
    spec = dict(spec)
    C = float(spec.pop("C", 0.0))
    if "preset" in spec:
        name = spec.pop("preset")
        if name not in PRESETS:
            raise ValueError(f"unknown potential preset {name!r}; choose from {sorted(PRESETS)}")
        return PRESETS[name](C=C, **spec)
    form = spec.pop("form", None)
    n = spec.pop("n", None)
    if form == "polynomial":
        return polynomial(Polynomial.from_list(spec.pop("terms"), n), C=C)
    if form == "radial":
        return RadialPowerPotential(n=int(n), C=C, beta=float(spec["beta"]), alpha=float(spec["alpha"]))
    if form == "separable":
        return SeparablePowerPotential(n=int(n), C=C, betas=tuple(map(float, spec["betas"])),
                                       alphas=tuple(map(float, spec["alphas"])))
    raise ValueError(f"unknown potential form {form!r}")


# -- pointwise operations -----------------------------------------------------------

def virial(phi: Potential, x) -> np.ndarray:
    """``2 phi(x) + x . grad phi(x)``."""
    x = _points(x, phi.n)
    return 2.0 * phi(x) + np.sum(x * phi.grad(x), axis=-1)


def angular_residual(phi: Potential, i: int, j: int, x) -> np.ndarray:
    """``x_i d_j phi - x_j d_i phi``."""
    if i == j:
        raise ValueError("angular residual needs i != j")
    x = _points(x, phi.n)
    g = phi.grad(x)
    return x[..., i] * g[..., j] - x[..., j] * g[..., i]


def angular_residual_polynomial(phi: PolynomialPotential, i: int, j: int) -> Polynomial:
    g = phi.gradient_polynomials()
    return g[j].times_variable(i) - g[i].times_variable(j)


def virial_polynomial(phi: PolynomialPotential) -> Polynomial:
    g = phi.gradient_polynomials()
    out = phi.full_polynomial() * 2.0
    for k in range(phi.n):
        out = out + g[k].times_variable(k)
    return out


def is_even(phi: Potential) -> bool:
    if isinstance(phi, PolynomialPotential):
        return phi.poly.is_even_in(range(phi.n))
    return True


def is_even_in_pair(phi: Potential, i: int, j: int) -> bool:
    if i == j:
        raise ValueError("pair parity needs i != j")
    if isinstance(phi, PolynomialPotential):
        return phi.poly.is_even_in((i, j))
    return True


# -- truncation box -------------------------------------------------------------------

def sphere_directions(n: int, count: int = 256, seed: int = 0) -> np.ndarray:
    dirs = [np.eye(n), -np.eye(n)]
    dirs.append(np.array(list(itertools.product([-1.0, 1.0], repeat=n))) / math.sqrt(n))
    u = qmc.Halton(d=n, scramble=True, seed=seed).random(count)
    g = np.sqrt(2.0) * _erfinv(2 * u - 1)
    dirs.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.vstack(dirs)


def _erfinv(y):
    from scipy.special import erfinv
    return erfinv(np.clip(y, -1 + 1e-12, 1 - 1e-12))


@functools.lru_cache(maxsize=None)
def potential_minimum(phi: Potential) -> float:
    n = phi.n
    best_x, best = np.zeros(n), float(phi(np.zeros(n)))
    for scale in (0.5, 2.0, 8.0):
        pts = scale * (2 * qmc.Halton(d=n, scramble=True, seed=1).random(512) - 1)
        vals = phi(pts)
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, best_x = float(vals[k]), pts[k]
    res = optimize.minimize(lambda y: float(phi(y)), best_x, jac=lambda y: phi.grad(y), method="BFGS")
    return min(best, float(res.fun))


def _ray_radius(phi, u, vmin, level):
    def excess(r):
        return float(phi(r * u)) - vmin - level

    hi = 1.0
    while excess(hi) < 0 or excess(2 * hi) < 0:
        hi *= 2
        if hi > 1e8:
            raise ValueError("potential is not confining along a sampled ray")
    rs = np.geomspace(1e-6, 2 * hi, 400)
    vals = np.array([excess(r) for r in rs])
    below = np.nonzero(vals < 0)[0]
    if len(below) == 0:
        return 0.0
    k = below[-1]
    if k + 1 >= len(rs):
        raise ValueError("ray search failed to bracket the truncation radius")
    return optimize.brentq(excess, rs[k], rs[k + 1], xtol=1e-12)


@functools.lru_cache(maxsize=None)
def truncation_box(phi: Potential, level: float = TRUNCATION_LEVEL) -> Tuple[float, ...]:
    """Per-axis half-widths of the smallest centered box outside of which
    ``e^{-phi}`` is below ``level`` times its maximum, found by ray search."""
    vmin = potential_minimum(phi)
    log_level = -math.log(level)
    dirs = sphere_directions(phi.n)
    radii = np.array([_ray_radius(phi, u, vmin, log_level) for u in dirs])
    half = np.max(radii[:, None] * np.abs(dirs), axis=0)
    return tuple(float(h) for h in half * 1.02)


def box_samples(phi: Potential, count: int = N_SYMMETRY_SAMPLES, seed: int = 0, scale: float = 1.0):
    half = np.asarray(truncation_box(phi)) * scale
    u = qmc.Halton(d=phi.n, scramble=True, seed=seed).random(count)
    return (2 * u - 1) * half


# -- S_phi ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AngularPairSet:
    """Ordered pairs ``(i, j)``, ``i != j``, with ``x_i d_j phi = x_j d_i phi``."""

    n: int
    pairs: FrozenSet[Tuple[int, int]]
    residual_norms: Dict[Tuple[int, int], float] = field(default_factory=dict, compare=False, hash=False)

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.pairs

    def __iter__(self):
        return iter(sorted(self.pairs))

    def __len__(self):
        return len(self.pairs)

    def upper(self):
        """Pairs with ``i < j``."""
        return sorted(p for p in self.pairs if p[0] < p[1])

    def complement_upper(self):
        """``{(i, j): i < j, (i, j) not in S_phi}``."""
        return [(i, j) for i in range(self.n) for j in range(i + 1, self.n) if (i, j) not in self.pairs]

    def to_dict(self):
        """JSON form; pair indices are 1-based."""
        return {"pairs": [[i + 1, j + 1] for i, j in self.upper()],
                "residual_sup": {f"{i + 1},{j + 1}": v for (i, j), v in sorted(self.residual_norms.items())}}


@functools.lru_cache(maxsize=None)
def compute_S_phi(phi: Potential, seed: int = 0) -> AngularPairSet:
    n = phi.n
    pts = box_samples(phi, seed=seed)
    pairs, norms = set(), {}
    for i, j in itertools.combinations(range(n), 2):
        sup = float(np.max(np.abs(angular_residual(phi, i, j, pts))))
        norms[(i, j)] = norms[(j, i)] = sup
        if isinstance(phi, PolynomialPotential):
            scale = max(p.max_coefficient() for p in phi.gradient_polynomials())
            member = angular_residual_polynomial(phi, i, j).is_zero(scale=scale)
        elif isinstance(phi, RadialPowerPotential):
            member = sup < ANGULAR_THRESHOLD
        elif isinstance(phi, SeparablePowerPotential):
            certificate = (phi.alphas[i] == phi.alphas[j] == 2.0 and phi.betas[i] == phi.betas[j])
            member = certificate and sup < ANGULAR_THRESHOLD
        else:
            member = sup < ANGULAR_THRESHOLD
        if member:
            pairs.update({(i, j), (j, i)})
    return AngularPairSet(n=n, pairs=frozenset(pairs), residual_norms=norms)


# -- normalization --------------------------------------------------------------------

class NormalizationError(ValueError):
    pass


def normalize(phi: Potential, nodes_per_panel: int = 8, tol: float = 1e-8) -> Potential:
    """Return ``phi`` with ``C`` chosen so that the integral of ``e^{-phi}`` is 1."""
    from .quadrature import gibbs_rule

    rule = gibbs_rule(phi, nodes_per_panel=nodes_per_panel)
    mass = rule.raw_mass
    wide = gibbs_rule(phi, nodes_per_panel=nodes_per_panel, box_scale=1.5)
    if not np.isfinite(mass) or mass <= 0:
        raise NormalizationError("e^{-phi} is not integrable on the truncation box")
    if mass < (1 - 1e-6) * wide.raw_mass:
        raise NormalizationError(
            f"truncation box captures only {mass / wide.raw_mass:.9f} of the trial mass")
    out = phi.with_constant(phi.C + math.log(mass))
    check = gibbs_rule(out, nodes_per_panel=nodes_per_panel).raw_mass
    if abs(check - 1.0) > tol:
        raise NormalizationError(f"re-integration after normalization gives {check!r}")
    return out
