"""Sparse multivariate polynomials over indexed real variables.

A monomial is a tuple of ``(variable, exponent)`` pairs sorted by variable
index, with every exponent positive.  A :class:`Poly` maps monomials to
float coefficients and keeps its terms in graded order (total degree first,
then lexicographic in the variable indices), so two polynomials built from
the same terms in any order compare equal structurally.

Polynomials are immutable.  Bulk numerical work (residuals and Jacobians of
whole systems) goes through :class:`CompiledSystem`, which flattens the term
structure into arrays consumed by the kernels in :mod:`cavitysdp.kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels

Monomial = tuple  # tuple[tuple[int, int], ...]

ONE: Monomial = ()
DROP_TOL = 1e-14


def monomial_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def monomial_key(m: Monomial):
    return (monomial_degree(m), tuple((v, -e) for v, e in m))


def monomial_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    out = dict(a)
    for v, e in b:
        out[v] = out.get(v, 0) + e
    return tuple(sorted(out.items()))


def make_monomial(exponents: Mapping[int, int] | Iterable[tuple[int, int]]) -> Monomial:
    items = exponents.items() if isinstance(exponents, Mapping) else exponents
    acc: dict[int, int] = {}
    for v, e in items:
        if e < 0:
            raise ValueError("negative exponent")
        if e:
            acc[int(v)] = acc.get(int(v), 0) + int(e)
    return tuple(sorted(acc.items()))


def monomials_up_to(variables: Sequence[int], degree: int) -> list[Monomial]:
    """All monomials in ``variables`` of total degree at most ``degree``, graded order."""
    variables = sorted(variables)
    out: list[Monomial] = [ONE]
    layer: list[tuple[Monomial, int]] = [(ONE, 0)]
    for _ in range(degree):
        nxt = []
        for m, start in layer:
            for k in range(start, len(variables)):
                nxt.append((monomial_mul(m, ((variables[k], 1),)), k))
        layer = nxt
        out.extend(sorted((m for m, _ in layer), key=monomial_key))
    return out


class Poly:
    """Immutable sparse polynomial in ``dimension`` variables."""

    __slots__ = ("_terms", "dimension", "_hash")

    def __init__(self, terms: Mapping[Monomial, float] | Iterable[tuple[Monomial, float]] = (),
                 dimension: int = 0):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Monomial, float] = {}
        for m, c in items:
            acc[m] = acc.get(m, 0.0) + float(c)
        for m in acc:
            if m and m[-1][0] >= dimension:
                raise ValueError(f"variable index {m[-1][0]} outside dimension {dimension}")
        kept = [(m, c) for m, c in acc.items() if abs(c) > DROP_TOL]
        kept.sort(key=lambda mc: monomial_key(mc[0]))
        self._terms = tuple(kept)
        self.dimension = int(dimension)
        self._hash = None

    # construction helpers
    @classmethod
    def var(cls, index: int, dimension: int) -> "Poly":
        return cls({((index, 1),): 1.0}, dimension)

    @classmethod
    def const(cls, value: float, dimension: int) -> "Poly":
        return cls({ONE: value}, dimension)

    @classmethod
    def zero(cls, dimension: int) -> "Poly":
        return cls((), dimension)

    # structure
    @property
    def terms(self) -> tuple[tuple[Monomial, float], ...]:
        return self._terms

    def as_dict(self) -> dict[Monomial, float]:
        return dict(self._terms)

    def degree(self) -> int:
        return max((monomial_degree(m) for m, _ in self._terms), default=0)

    def support(self) -> frozenset[int]:
        return frozenset(v for m, _ in self._terms for v, _ in m)

    def is_zero(self) -> bool:
        return not self._terms

    def constant(self) -> float:
        for m, c in self._terms:
            if not m:
                return c
        return 0.0

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.dimension == other.dimension and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.dimension, self._terms))
        return self._hash

    def __repr__(self):
        if not self._terms:
            return "Poly(0)"
        parts = []
        for m, c in self._terms:
            mono = "*".join(f"x{v}" if e == 1 else f"x{v}^{e}" for v, e in m)
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return "Poly(" + " ".join(parts) + ")"

    # arithmetic
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.dimension != self.dimension:
                raise ValueError("dimension mismatch")
            return other
        return Poly.const(float(other), self.dimension)

    def __add__(self, other):
        other = self._coerce(other)
        return Poly(self._terms + other._terms, self.dimension)

    __radd__ = __add__

    def __neg__(self):
        return Poly(((m, -c) for m, c in self._terms), self.dimension)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            s = float(other)
            return Poly(((m, s * c) for m, c in self._terms), self.dimension)
        other = self._coerce(other)
        acc: dict[Monomial, float] = {}
        for ma, ca in self._terms:
            for mb, cb in other._terms:
                m = monomial_mul(ma, mb)
                acc[m] = acc.get(m, 0.0) + ca * cb
        return Poly(acc, self.dimension)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def __pow__(self, k: int):
        out = Poly.const(1.0, self.dimension)
        for _ in range(int(k)):
            out = out * self
        return out

    # calculus and evaluation
    def __call__(self, x) -> float:
        return poly_eval(self, x)

    def diff(self, index: int) -> "Poly":
        acc = []
        for m, c in self._terms:
            for pos, (v, e) in enumerate(m):
                if v == index:
                    rest = m[:pos] + (((v, e - 1),) if e > 1 else ()) + m[pos + 1:]
                    acc.append((rest, c * e))
        return Poly(acc, self.dimension)

    def with_dimension(self, dimension: int) -> "Poly":
        return Poly(self._terms, dimension)


def poly_eval(p: Poly, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dimension,):
        raise ValueError(f"expected a point of length {p.dimension}, got shape {x.shape}")
    total = 0.0
    for m, c in p.terms:
        t = c
        for v, e in m:
            t *= x[v] ** e
        total += t
    return float(total)


def poly_grad(p: Poly) -> list[Poly]:
    out = [Poly.zero(p.dimension) for _ in range(p.dimension)]
    for v in p.support():
        out[v] = p.diff(v)
    return out


def poly_mul(p: Poly, q: Poly) -> Poly:
    return p * q


@dataclass(frozen=True)
class PolySystem:
    """Equalities ``p = 0`` and inequalities ``p >= 0`` over a shared dimension."""

    equalities: tuple[Poly, ...]
    inequalities: tuple[Poly, ...] = ()
    dimension: int = 0
    _compiled: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "equalities", tuple(self.equalities))
        object.__setattr__(self, "inequalities", tuple(self.inequalities))
        for p in self.equalities + self.inequalities:
            if p.dimension != self.dimension:
                raise ValueError("all member polynomials must share the system dimension")

    def is_square(self) -> bool:
        return len(self.equalities) == self.dimension

    def degree(self) -> int:
        return max((p.degree() for p in self.equalities + self.inequalities), default=0)

    def compiled(self) -> "CompiledSystem":
        if "eq" not in self._compiled:
            self._compiled["eq"] = CompiledSystem(self.equalities, self.dimension)
        return self._compiled["eq"]

    def residual(self, x) -> np.ndarray:
        return self.compiled().residual(x)

    def jacobian(self, x, sparse: bool = False):
        return self.compiled().jacobian(x, sparse=sparse)


def system_jacobian(s: PolySystem, x) -> np.ndarray:
    """Dense Jacobian of the equalities of ``s`` at ``x`` (row i = gradient of equality i)."""
    return s.jacobian(x)


class CompiledSystem:
    """Flattened term arrays of a list of polynomials, for fast bulk evaluation."""

    def __init__(self, polys: Sequence[Poly], dimension: int):
        self.dimension = int(dimension)
        self.n_polys = len(polys)
        coef, row, ptr, fvar, fexp = [], [], [0], [], []
        for r, p in enumerate(polys):
            for m, c in p.terms:
                coef.append(c)
                row.append(r)
                for v, e in m:
                    fvar.append(v)
                    fexp.append(e)
                ptr.append(len(fvar))
        self.coef = np.asarray(coef, dtype=np.float64)
        self.term_row = np.asarray(row, dtype=np.int64)
        self.term_ptr = np.asarray(ptr, dtype=np.int64)
        self.fac_var = np.asarray(fvar, dtype=np.int64)
        self.fac_exp = np.asarray(fexp, dtype=np.int64)
        # Jacobian sparsity: one slot per factor, mapped onto unique (row, col) pairs
        fac_row = np.repeat(self.term_row, np.diff(self.term_ptr))
        keys = fac_row * max(self.dimension, 1) + self.fac_var
        uniq, slot = np.unique(keys, return_inverse=True)
        self.slot_nz = slot.astype(np.int64)
        self.jac_rows = (uniq // max(self.dimension, 1)).astype(np.int64)
        self.jac_cols = (uniq % max(self.dimension, 1)).astype(np.int64)
        self._kernel_data = kernels.prepare(self.coef, self.term_row, self.term_ptr,
                                            self.fac_var, self.fac_exp, self.slot_nz)

    def _point(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected a point of length {self.dimension}, got shape {x.shape}")
        return x

    def residual(self, x) -> np.ndarray:
        out = np.zeros(self.n_polys)
        kernels.eval_polys(self._kernel_data, self._point(x), out)
        return out

    def jacobian_values(self, x) -> np.ndarray:
        out = np.zeros(len(self.jac_rows))
        kernels.jac_values(self._kernel_data, self._point(x), out)
        return out

    def jacobian(self, x, sparse: bool = False):
        vals = self.jacobian_values(x)
        if sparse:
            return sp.csr_matrix((vals, (self.jac_rows, self.jac_cols)),
                                 shape=(self.n_polys, self.dimension))
        J = np.zeros((self.n_polys, self.dimension))
        J[self.jac_rows, self.jac_cols] = vals
        return J
