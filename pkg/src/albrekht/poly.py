"""Homogeneous multivariate polynomials stored as monomial coefficient tables.

A :class:`HomPoly` of degree ``d`` in ``n`` variables is a sparse map from
exponent tuples (all of length ``n`` and total degree ``d``) to
coefficients.  Coefficients are plain Python numbers; ``mpmath.mpf`` values
also work, which the series solver uses for its extended-precision mode.

Monomials are ordered graded-lexicographically: within one degree, exponent
tuples are sorted in descending lexicographic order, so for two variables
and degree 3 the basis is ``x1^3, x1^2 x2, x1 x2^2, x2^3``.  Every coefficient
vector and every operator matrix in the package uses this order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError

PRUNE_RTOL = 1e-14
DEGREE_CAP = 6

Exponents = tuple[int, ...]


def _compositions(nvars: int, degree: int):
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _compositions(nvars - 1, degree - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def enumerate_basis(nvars: int, degree: int) -> tuple[Exponents, ...]:
    """All exponent tuples of total degree ``degree`` in graded-lex order."""
    if nvars < 1 or degree < 0:
        raise ValueError(f"need nvars >= 1 and degree >= 0, got {nvars}, {degree}")
    basis = tuple(_compositions(nvars, degree))
    assert len(basis) == comb(nvars + degree - 1, degree)
    return basis


@lru_cache(maxsize=None)
def basis_index(nvars: int, degree: int) -> dict[Exponents, int]:
    return {e: i for i, e in enumerate(enumerate_basis(nvars, degree))}


def graded_key(exponents: Exponents) -> tuple:
    """Sort key realising the graded-lex total order across degrees."""
    return (sum(exponents), tuple(-e for e in exponents))


def _add_exp(a: Exponents, b: Exponents) -> Exponents:
    return tuple(i + j for i, j in zip(a, b))


@dataclass(frozen=True, eq=False)
class HomPoly:
    nvars: int
    degree: int
    coeffs: Mapping[Exponents, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.nvars < 1 or self.degree < 0:
            raise DimensionError(f"bad HomPoly shape nvars={self.nvars} degree={self.degree}")
        clean = {}
        for exp, c in self.coeffs.items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.nvars or sum(exp) != self.degree or min(exp) < 0:
                raise DimensionError(
                    f"monomial {exp} does not fit nvars={self.nvars}, degree={self.degree}"
                )
            if c != 0:
                clean[exp] = c
        object.__setattr__(self, "coeffs", clean)

    # construction -----------------------------------------------------------
    @classmethod
    def zero(cls, nvars: int, degree: int) -> "HomPoly":
        return cls(nvars, degree, {})

    @classmethod
    def monomial(cls, exponents: Sequence[int], coeff=1.0) -> "HomPoly":
        exponents = tuple(exponents)
        return cls(len(exponents), sum(exponents), {exponents: coeff})

    @classmethod
    def linear(cls, row: Sequence) -> "HomPoly":
        """The linear form ``sum_j row[j] * x_j``."""
        n = len(row)
        coeffs = {}
        for j, c in enumerate(row):
            e = [0] * n
            e[j] = 1
            coeffs[tuple(e)] = c
        return cls(n, 1, coeffs)

    @classmethod
    def constant(cls, nvars: int, value) -> "HomPoly":
        return cls(nvars, 0, {(0,) * nvars: value})

    @classmethod
    def from_vector(cls, nvars: int, degree: int, vec: Iterable) -> "HomPoly":
        basis = enumerate_basis(nvars, degree)
        vec = list(vec)
        if len(vec) != len(basis):
            raise DimensionError(f"expected {len(basis)} coefficients, got {len(vec)}")
        return cls(nvars, degree, dict(zip(basis, vec)))

    def to_vector(self, dtype=float) -> np.ndarray:
        basis = enumerate_basis(self.nvars, self.degree)
        zero = 0.0 if dtype is float else 0
        return np.array([self.coeffs.get(e, zero) for e in basis], dtype=dtype)

    # arithmetic -------------------------------------------------------------
    def _check_same(self, other: "HomPoly"):
        if self.nvars != other.nvars:
            raise DimensionError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other: "HomPoly") -> "HomPoly":
        self._check_same(other)
        if self.degree != other.degree:
            raise DimensionError(f"cannot add degrees {self.degree} and {other.degree}")
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0) + c
        return HomPoly(self.nvars, self.degree, out)

    def __neg__(self) -> "HomPoly":
        return HomPoly(self.nvars, self.degree, {e: -c for e, c in self.coeffs.items()})

    def __sub__(self, other: "HomPoly") -> "HomPoly":
        return self + (-other)

    def scale(self, s) -> "HomPoly":
        return HomPoly(self.nvars, self.degree, {e: s * c for e, c in self.coeffs.items()})

    def __mul__(self, other):
        if isinstance(other, HomPoly):
            return multiply(self, other)
        return self.scale(other)

    __rmul__ = scale

    def partial(self, j: int) -> "HomPoly":
        return partial(self, j)

    def __call__(self, x):
        return evaluate(self, x)

    # inspection -------------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.coeffs

    def max_abs(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def normalize(self, rtol=PRUNE_RTOL) -> "HomPoly":
        """Drop coefficients below ``rtol`` times the largest magnitude."""
        big = self.max_abs()
        if big == 0:
            return HomPoly.zero(self.nvars, self.degree)
        cut = rtol * big
        return HomPoly(
            self.nvars, self.degree, {e: c for e, c in self.coeffs.items() if abs(c) >= cut}
        )

    def items(self):
        """(exponents, coeff) pairs in graded-lex order."""
        idx = basis_index(self.nvars, self.degree)
        return sorted(self.coeffs.items(), key=lambda kv: idx[kv[0]])

    def to_records(self) -> list[dict]:
        return [{"exponents": list(e), "coeff": float(c)} for e, c in self.items()]

    @classmethod
    def from_records(cls, nvars: int, degree: int, records: Iterable[Mapping]) -> "HomPoly":
        out: dict[Exponents, float] = {}
        for rec in records:
            e = tuple(rec["exponents"])
            out[e] = out.get(e, 0.0) + float(rec["coeff"])
        return cls(nvars, degree, out)

    def __repr__(self):
        if not self.coeffs:
            return f"HomPoly(nvars={self.nvars}, degree={self.degree}, 0)"
        body = " + ".join(f"{float(c):.6g}*x^{e}" for e, c in self.items())
        return f"HomPoly(nvars={self.nvars}, degree={self.degree}, {body})"


def multiply(p: HomPoly, q: HomPoly) -> HomPoly:
    if p.nvars != q.nvars:
        raise DimensionError(f"nvars mismatch: {p.nvars} vs {q.nvars}")
    out: dict[Exponents, Any] = {}
    for ep, cp in p.coeffs.items():
        for eq, cq in q.coeffs.items():
            e = _add_exp(ep, eq)
            out[e] = out.get(e, 0) + cp * cq
    return HomPoly(p.nvars, p.degree + q.degree, out)


def partial(p: HomPoly, j: int) -> HomPoly:
    """Derivative with respect to variable ``j``.

    A degree-0 input yields the degree-0 zero polynomial rather than an error.
    """
    if not 0 <= j < p.nvars:
        raise DimensionError(f"variable index {j} out of range for nvars={p.nvars}")
    if p.degree == 0:
        return HomPoly.zero(p.nvars, 0)
    out = {}
    for e, c in p.coeffs.items():
        if e[j]:
            f = list(e)
            f[j] -= 1
            out[tuple(f)] = c * e[j]
    return HomPoly(p.nvars, p.degree - 1, out)


def gradient(p: HomPoly) -> list[HomPoly]:
    return [partial(p, j) for j in range(p.nvars)]


def linear_forms(A) -> list[HomPoly]:
    """Rows of ``A`` as linear forms, i.e. the components of ``x -> A x``."""
    return [HomPoly.linear(list(row)) for row in A]


def hessian_form(p: HomPoly, A, B) -> HomPoly:
    """The polynomial ``x -> (A x)' d2p/dx2(x) (B x)``, same degree as ``p``."""
    n = p.nvars
    if p.degree < 2:
        return HomPoly.zero(n, p.degree)
    Ax = linear_forms(A)
    Bx = linear_forms(B)
    if len(Ax) != n or len(Bx) != n:
        raise DimensionError("hessian_form needs n x n matrices")
    out = HomPoly.zero(n, p.degree)
    grad = gradient(p)
    for i in range(n):
        if Ax[i].is_zero() or grad[i].is_zero():
            continue
        acc = HomPoly.zero(n, p.degree - 1)
        for j in range(n):
            if Bx[j].is_zero():
                continue
            hij = partial(grad[i], j)
            if not hij.is_zero():
                acc = acc + multiply(hij, Bx[j])
        out = out + multiply(Ax[i], acc)
    return out


def evaluate(p, x) -> Any:
    """Value of a HomPoly or PolySeries at the point ``x``."""
    if isinstance(p, PolySeries):
        return p.evaluate(x)
    if len(x) != p.nvars:
        raise DimensionError(f"point has {len(x)} entries, polynomial has {p.nvars} variables")
    total = 0
    for e, c in p.coeffs.items():
        term = c
        for xi, ei in zip(x, e):
            if ei:
                term = term * xi**ei
        total = total + term
    return total


@dataclass(frozen=True, eq=False)
class PolySeries:
    """A truncated sum of homogeneous parts keyed by degree."""

    nvars: int
    terms: Mapping[int, HomPoly] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for d, h in self.terms.items():
            if h.nvars != self.nvars or h.degree != d:
                raise DimensionError(
                    f"term keyed {d} has nvars={h.nvars}, degree={h.degree}; series nvars={self.nvars}"
                )
            if not h.is_zero():
                clean[d] = h
        object.__setattr__(self, "terms", dict(sorted(clean.items())))

    @classmethod
    def from_homs(cls, nvars: int, homs: Iterable[HomPoly]) -> "PolySeries":
        acc: dict[int, HomPoly] = {}
        for h in homs:
            acc[h.degree] = acc[h.degree] + h if h.degree in acc else h
        return cls(nvars, acc)

    @classmethod
    def zero(cls, nvars: int) -> "PolySeries":
        return cls(nvars, {})

    @property
    def min_degree(self):
        return min(self.terms, default=None)

    @property
    def max_degree(self):
        return max(self.terms, default=None)

    def part(self, d: int) -> HomPoly:
        return self.terms.get(d, HomPoly.zero(self.nvars, d))

    def truncate(self, cap: int) -> "PolySeries":
        return PolySeries(self.nvars, {d: h for d, h in self.terms.items() if d <= cap})

    def __add__(self, other: "PolySeries") -> "PolySeries":
        if self.nvars != other.nvars:
            raise DimensionError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
        return PolySeries.from_homs(self.nvars, list(self.terms.values()) + list(other.terms.values()))

    def scale(self, s) -> "PolySeries":
        return PolySeries(self.nvars, {d: h.scale(s) for d, h in self.terms.items()})

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def mul(self, other: "PolySeries", cap: int | None = None) -> "PolySeries":
        if self.nvars != other.nvars:
            raise DimensionError(f"nvars mismatch: {self.nvars} vs {other.nvars}")
        out: dict[int, HomPoly] = {}
        for d1, h1 in self.terms.items():
            for d2, h2 in other.terms.items():
                if cap is not None and d1 + d2 > cap:
                    continue
                prod = multiply(h1, h2)
                out[d1 + d2] = out[d1 + d2] + prod if d1 + d2 in out else prod
        return PolySeries(self.nvars, out)

    def partial(self, j: int) -> "PolySeries":
        return PolySeries.from_homs(self.nvars, (partial(h, j) for d, h in self.terms.items() if d > 0))

    def evaluate(self, x):
        return sum((evaluate(h, x) for h in self.terms.values()), 0)

    __call__ = evaluate

    def normalize(self, rtol=PRUNE_RTOL) -> "PolySeries":
        return PolySeries(self.nvars, {d: h.normalize(rtol) for d, h in self.terms.items()})

    def to_records(self) -> list[dict]:
        return [{"degree": d, "terms": h.to_records()} for d, h in self.terms.items()]

    @classmethod
    def from_records(cls, nvars: int, blocks: Iterable[Mapping]) -> "PolySeries":
        return cls.from_homs(
            nvars, (HomPoly.from_records(nvars, int(b["degree"]), b["terms"]) for b in blocks)
        )

    def __repr__(self):
        return f"PolySeries(nvars={self.nvars}, degrees={list(self.terms)})"


def as_series(p) -> PolySeries:
    if isinstance(p, PolySeries):
        return p
    return PolySeries(p.nvars, {p.degree: p})


def substitute(p, umap: Sequence[PolySeries], cap: int | None = None) -> PolySeries:
    """Substitute ``u := umap(x)`` into a polynomial ``p(x, u)``.

    ``p`` lives in ``n + m`` variables with the state block first; ``umap``
    holds ``m`` series in ``n`` variables, each without a constant term.  The
    result is truncated at total degree ``cap`` (no truncation when ``cap``
    is None).
    """
    p = as_series(p)
    m = len(umap)
    n = p.nvars - m
    if n < 1:
        raise DimensionError(f"polynomial has {p.nvars} variables, cannot split off {m} controls")
    for j, s in enumerate(umap):
        if s.nvars != n:
            raise DimensionError(f"umap[{j}] has {s.nvars} variables, expected {n}")
        if s.min_degree is not None and s.min_degree < 1:
            raise DimensionError(f"umap[{j}] has a constant term")

    powers: list[dict[int, PolySeries]] = [{0: PolySeries(n, {0: HomPoly.constant(n, 1)})} for _ in range(m)]

    def power(j: int, e: int) -> PolySeries:
        cache = powers[j]
        if e not in cache:
            cache[e] = power(j, e - 1).mul(umap[j], cap)
        return cache[e]

    out: dict[int, HomPoly] = {}
    for h in p.terms.values():
        for e, c in h.coeffs.items():
            ex, eu = e[:n], e[n:]
            term = PolySeries(n, {sum(ex): HomPoly(n, sum(ex), {ex: c})})
            for j, k in enumerate(eu):
                if k:
                    term = term.mul(power(j, k), cap)
                    if not term.terms:
                        break
            for d, t in term.terms.items():
                if cap is None or d <= cap:
                    out[d] = out[d] + t if d in out else t
    return PolySeries(n, out)


def embed_state(p: HomPoly, m: int) -> HomPoly:
    """View a polynomial in ``x`` as one in ``(x, u)`` that ignores ``u``."""
    return HomPoly(p.nvars + m, p.degree, {e + (0,) * m: c for e, c in p.coeffs.items()})


def matrix_series(A, B=None) -> list[PolySeries]:
    """Components of the linear map ``(x, u) -> A x + B u`` as degree-1 series."""
    A = np.asarray(A)
    rows = A.shape[0]
    blocks = [A] if B is None else [A, np.asarray(B)]
    full = np.concatenate(blocks, axis=1)
    nv = full.shape[1]
    return [PolySeries(nv, {1: HomPoly.linear(list(full[i]))}) for i in range(rows)]
