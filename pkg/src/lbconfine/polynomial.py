"""Sparse multivariate polynomials with exact monomial bookkeeping.

Used for polynomial potentials, for velocity moments, and for the monomial
coefficient matrices of the linear-independence tests.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

MultiIndex = Tuple[int, ...]

# coefficients below this fraction of the largest one are float round-off
REL_ZERO = 1e-12


def rationalize(c: float, max_denominator: int = 10**12) -> Fraction:
    """Exact rational for a float coefficient.

    A nearby fraction with a small denominator is preferred when it is within a
    few ulps, so that round-off such as ``0.1 * 3`` does not break exact
    cancellations; otherwise the exact binary value is used.
    """
    exact = Fraction(c)
    near = exact.limit_denominator(max_denominator)
    if abs(float(near) - c) <= 4 * abs(c) * 2.0 ** -52:
        return near
    return exact


def fraction_nullspace(mat) -> list:
    """Basis of the right null space of a matrix of ``Fraction`` entries
    (list of rows), by exact Gauss-Jordan elimination."""
    rows = [list(r) for r in mat]
    ncols = len(rows[0]) if rows else 0
    pivots = []
    r = 0
    for col in range(ncols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = 1 / rows[r][col]
        rows[r] = [v * inv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                factor = rows[i][col]
                rows[i] = [a - factor * b for a, b in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1
        if r == len(rows):
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -rows[i][f]
        basis.append(v)
    return basis


def unit_index(n: int, k: int) -> MultiIndex:
    e = [0] * n
    e[k] = 1
    return tuple(e)


class Polynomial:
    """Immutable sparse polynomial ``sum_a c_a x^a`` in ``n`` variables."""

    __slots__ = ("n", "_terms")

    def __init__(self, terms: Mapping[Iterable[int], float], n: int | None = None):
        cleaned: Dict[MultiIndex, float] = {}
        for alpha, c in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            if n is None:
                n = len(alpha)
            if len(alpha) != n:
                raise ValueError(f"multi-index {alpha} has length {len(alpha)}, expected {n}")
            c = float(c)
            if c != 0.0:
                cleaned[alpha] = cleaned.get(alpha, 0.0) + c
        if n is None:
            raise ValueError("cannot infer dimension of an empty polynomial; pass n")
        self.n = n
        self._terms = {a: c for a, c in cleaned.items() if c != 0.0}

    # -- construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, c: float, n: int) -> "Polynomial":
        return cls({(0,) * n: c}, n)

    @classmethod
    def variable(cls, k: int, n: int) -> "Polynomial":
        return cls({unit_index(n, k): 1.0}, n)

    @classmethod
    def norm_squared(cls, n: int) -> "Polynomial":
        return cls({tuple(2 if j == k else 0 for j in range(n)): 1.0 for k in range(n)}, n)

    # -- basic protocol --------------------------------------------------------
    @property
    def terms(self) -> Dict[MultiIndex, float]:
        return dict(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        return f"Polynomial({self._terms!r}, n={self.n})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.n == other.n and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self.n, tuple(sorted(self._terms.items()))))

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self._terms), default=0)

    def axis_degree(self, k: int) -> int:
        return max((a[k] for a in self._terms), default=0)

    def max_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def is_zero(self, rel_tol: float = REL_ZERO, scale: float | None = None) -> bool:
        """True when every coefficient is zero up to ``rel_tol * scale``."""
        if scale is None:
            scale = self.max_coefficient()
        if scale == 0.0:
            return True
        return all(abs(c) <= rel_tol * scale for c in self._terms.values())

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"point dimension {x.shape[-1]} does not match polynomial dimension {self.n}")
        out = np.zeros(x.shape[:-1])
        for alpha, c in self._terms.items():
            term = np.full(x.shape[:-1], c)
            for k, a in enumerate(alpha):
                if a:
                    term = term * x[..., k] ** a
            out = out + term
        return out

    # -- algebra ----------------------------------------------------------------
    def _check(self, other: "Polynomial"):
        if other.n != self.n:
            raise ValueError("dimension mismatch between polynomials")

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other, self.n)
        self._check(other)
        terms = dict(self._terms)
        for a, c in other._terms.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(terms, self.n)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({a: -c for a, c in self._terms.items()}, self.n)

    def __sub__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other, self.n)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            self._check(other)
            terms: Dict[MultiIndex, float] = {}
            for a, c in self._terms.items():
                for b, d in other._terms.items():
                    key = tuple(i + j for i, j in zip(a, b))
                    terms[key] = terms.get(key, 0.0) + c * d
            return Polynomial(terms, self.n)
        s = float(other)
        return Polynomial({a: s * c for a, c in self._terms.items()}, self.n)

    __rmul__ = __mul__

    def deriv(self, k: int) -> "Polynomial":
        terms = {}
        for alpha, c in self._terms.items():
            if alpha[k]:
                beta = list(alpha)
                beta[k] -= 1
                terms[tuple(beta)] = c * alpha[k]
        return Polynomial(terms, self.n)

    def grad(self) -> list:
        return [self.deriv(k) for k in range(self.n)]

    def times_variable(self, k: int) -> "Polynomial":
        return Polynomial({tuple(a + (j == k) for j, a in enumerate(alpha)): c
                           for alpha, c in self._terms.items()}, self.n)

    def reflect(self, axes: Iterable[int]) -> "Polynomial":
        """Polynomial of ``x`` with the coordinates in ``axes`` negated."""
        axes = set(axes)
        return Polynomial({alpha: c * (-1) ** sum(alpha[k] for k in axes)
                           for alpha, c in self._terms.items()}, self.n)

    def is_even_in(self, axes: Iterable[int]) -> bool:
        """Exact parity test: invariant under negating ``axes`` jointly."""
        axes = tuple(axes)
        return all(sum(alpha[k] for k in axes) % 2 == 0 for alpha in self._terms)

    def exact_coefficients(self) -> Dict[MultiIndex, Fraction]:
        return {a: rationalize(c) for a, c in self._terms.items()}

    def to_list(self) -> list:
        return [[list(a), c] for a, c in sorted(self._terms.items())]

    @classmethod
    def from_list(cls, items, n: int | None = None) -> "Polynomial":
        return cls({tuple(a): c for a, c in items}, n)


def coefficient_matrix(polys: list, exact: bool = False):
    """Monomial-by-member coefficient matrix of a family of polynomials.

    Returns ``(monomials, matrix)``; column ``j`` holds the coefficients of
    ``polys[j]``. With ``exact=True`` the entries are ``Fraction`` objects.
    """
    monomials = sorted({a for p in polys for a in p._terms})
    row = {a: i for i, a in enumerate(monomials)}
    if exact:
        mat = [[Fraction(0)] * len(polys) for _ in monomials]
        for j, p in enumerate(polys):
            for a, c in p.exact_coefficients().items():
                mat[row[a]][j] = c
        return monomials, mat
    mat = np.zeros((len(monomials), len(polys)))
    for j, p in enumerate(polys):
        for a, c in p._terms.items():
            mat[row[a], j] = c
    return monomials, mat
