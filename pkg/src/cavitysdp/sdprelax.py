"""Sparse moment relaxations of cavity-flow POPs.

The correlative sparsity graph links variables that share a constraint or an
objective monomial.  A minimum-degree chordal extension gives the cliques;
each clique carries its own moment matrix and all cliques share one global
moment vector, so overlapping monomials are consistent by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .cavity import CavityPOP, Solution
from .polysys import ONE, Monomial, Poly, monomial_degree, monomial_mul, monomials_up_to
from .sdpsolve import CONST, SDPProblem, SDPSolution


@dataclass
class CliqueSet:
    cliques: list[tuple[int, ...]]
    # constraint position -> clique index, for equalities and inequalities of the POP
    eq_assignment: list[int] = field(default_factory=list)
    ineq_assignment: list[int] = field(default_factory=list)

    def covering(self, support) -> int:
        """Index of the smallest clique containing ``support`` (``-1`` if none)."""
        support = set(support)
        best, best_size = -1, None
        for k, C in enumerate(self.cliques):
            if support.issubset(C) and (best_size is None or len(C) < best_size):
                best, best_size = k, len(C)
        return best

    def sizes(self) -> list[int]:
        return [len(C) for C in self.cliques]


def _sparsity_graph(n: int, supports: Sequence[frozenset]) -> list[set]:
    adj = [set() for _ in range(n)]
    for S in supports:
        S = list(S)
        for a in S:
            adj[a].update(S)
    for a in range(n):
        adj[a].discard(a)
    return adj


def chordal_cliques(adj: list[set]) -> list[tuple[int, ...]]:
    """Maximal cliques of the minimum-degree chordal extension of ``adj``."""
    n = len(adj)
    g = [set(s) for s in adj]
    alive = set(range(n))
    raw = []
    while alive:
        v = min(alive, key=lambda a: (len(g[a]), a))
        nb = g[v]
        raw.append(frozenset(nb | {v}))
        for a in nb:
            g[a].update(nb)
            g[a].discard(a)
            g[a].discard(v)
        alive.discard(v)
        g[v] = set()
    raw = sorted(set(raw), key=len, reverse=True)
    maximal: list[frozenset] = []
    for C in raw:
        if not any(C <= D for D in maximal):
            maximal.append(C)
    return sorted((tuple(sorted(C)) for C in maximal), key=lambda c: (c[0], c))


def merge_cliques(cliques: list[tuple[int, ...]], ratio: float = 0.75) -> list[tuple[int, ...]]:
    """Greedily merge clique pairs whose Jaccard overlap exceeds ``ratio``."""
    cs = [set(c) for c in cliques]
    changed = True
    while changed:
        changed = False
        best = None
        for a in range(len(cs)):
            for b in range(a + 1, len(cs)):
                inter = len(cs[a] & cs[b])
                if inter and inter / len(cs[a] | cs[b]) > ratio:
                    score = inter / len(cs[a] | cs[b])
                    if best is None or score > best[0]:
                        best = (score, a, b)
        if best is not None:
            _, a, b = best
            cs[a] |= cs[b]
            del cs[b]
            changed = True
    return sorted((tuple(sorted(c)) for c in cs), key=lambda c: (c[0], c))


def csp_cliques(pop: CavityPOP, extra: Sequence[Poly] = (), merge_ratio: float | None = 0.75) -> CliqueSet:
    """Cliques covering every constraint support and every objective monomial."""
    n = pop.dimension
    supports = [p.support() for p in pop.system.equalities]
    supports += [p.support() for p in pop.system.inequalities]
    supports += [p.support() for p in extra]
    supports += [frozenset(v for v, _ in m) for m, _ in pop.objective.terms]
    supports = [S for S in supports if S]
    cliques = chordal_cliques(_sparsity_graph(n, supports))
    if merge_ratio is not None:
        cliques = merge_cliques(cliques, merge_ratio)
    cs = CliqueSet(cliques)
    cs.eq_assignment = [cs.covering(p.support()) for p in pop.system.equalities]
    cs.ineq_assignment = [cs.covering(p.support()) for p in pop.system.inequalities]
    return cs


def min_relax_order(pop) -> int:
    """``max ceil(deg / 2)`` over the objective and all constraints."""
    if isinstance(pop, CavityPOP):
        polys = [pop.objective, *pop.system.equalities, *pop.system.inequalities]
    else:
        polys = list(pop)
    return max(1, max((math.ceil(p.degree() / 2) for p in polys), default=1))


@dataclass
class RelaxedProblem:
    sdp: SDPProblem
    moment_index: dict
    first_order: np.ndarray
    cliques: CliqueSet
    order: int
    block_kind: list[str] = field(default_factory=list)
    n_equalities: int = 0
    # moments live in the scaled variables z = x / var_scale; the SDP objective is L(F) / obj_scale
    var_scale: np.ndarray | None = None
    obj_scale: float = 1.0

    def objective_value(self, sol: SDPSolution) -> float:
        """``L(F)`` in original units."""
        return float(sol.primal_objective) * self.obj_scale

    def monomial_of(self, k: int) -> Monomial:
        inv = getattr(self, "_inv", None)
        if inv is None:
            inv = {v: m for m, v in self.moment_index.items()}
            self._inv = inv
        return inv[k]


class _Builder:
    def __init__(self):
        self.index: dict[Monomial, int] = {ONE: 0}
        self.eq_rows: list[dict[int, float]] = []
        self.eq_rhs: list[float] = []
        self.blocks: list[int] = []
        self.kinds: list[str] = []
        self.entries: list[tuple[int, int, int, int, float]] = []

    def mid(self, m: Monomial) -> int:
        k = self.index.get(m)
        if k is None:
            k = len(self.index)
            self.index[m] = k
        return k

    def linear(self, p: Poly, mult: Monomial = ONE) -> dict[int, float]:
        row: dict[int, float] = {}
        for m, c in p.terms:
            k = self.mid(monomial_mul(m, mult))
            row[k] = row.get(k, 0.0) + c
        return row

    def add_equality(self, row: dict[int, float], rhs: float = 0.0):
        row = {k: v for k, v in row.items() if v != 0.0}
        if row:
            self.eq_rows.append(row)
            self.eq_rhs.append(rhs)

    def add_block(self, basis: list[Monomial], weight: Poly | None, kind: str):
        k = len(self.blocks)
        self.blocks.append(len(basis))
        self.kinds.append(kind)
        for a in range(len(basis)):
            for b in range(a + 1):
                mab = monomial_mul(basis[a], basis[b])
                if weight is None:
                    self.entries.append((k, a, b, self.mid(mab), 1.0))
                else:
                    for var, coef in self.linear(weight, mab).items():
                        self.entries.append((k, a, b, var, coef))


def _scale_poly(p: Poly, s: np.ndarray) -> Poly:
    """``p(s * z)`` as a polynomial in ``z``."""
    out = []
    for m, c in p.terms:
        for v, e in m:
            c *= s[v] ** e
        out.append((m, c))
    return Poly(out, p.dimension)


def _normalized(row: dict[int, float]) -> dict[int, float]:
    top = max((abs(v) for v in row.values()), default=0.0)
    return {k: v / top for k, v in row.items()} if top > 0 else row


def build_relaxation(pop: CavityPOP, w: int = 1, exclusions: Sequence[Poly] = (), *,
                     cliques: CliqueSet | None = None, bound_products: bool = False,
                     include_bounds: bool = True, scale: bool = True,
                     equality_mode: str = "full") -> RelaxedProblem:
    """Order-``w`` sparse moment relaxation of ``pop`` with extra ``exclusions >= 0``.

    ``bound_products`` additionally imposes ``(x - lbd)(ubd - x) >= 0`` per
    variable, which caps the second moments at order one.  With ``scale``
    the moments are taken in box-normalized variables and every equality row
    is normalized; this is a congruence of the same relaxation and only
    improves the conditioning seen by the solver.

    ``equality_mode="full"`` imposes ``L(h m) = 0`` for every clique monomial
    with ``deg(h m) <= 2w``; ``"localizing"`` only uses the monomial products
    of a localizing matrix of order ``w - ceil(deg h / 2)``, which drops the
    products of linear equalities with first-order monomials at ``w = 1``.
    """
    if equality_mode not in ("full", "localizing"):
        raise ValueError(f"unknown equality mode {equality_mode!r}")
    if w < min_relax_order(pop):
        raise ValueError(f"relaxation order {w} below the minimal order {min_relax_order(pop)}")
    cs = cliques if cliques is not None else csp_cliques(pop)
    n = pop.dimension
    if scale:
        vs = np.maximum(np.maximum(np.abs(pop.lbd), np.abs(pop.ubd)), 1e-300)
    else:
        vs = np.ones(n)
    sc = (lambda p: _scale_poly(p, vs)) if scale else (lambda p: p)
    lbd, ubd = pop.lbd / vs, pop.ubd / vs
    B = _Builder()
    # first-order moments get the lowest indices
    for v in range(n):
        B.mid(((v, 1),))
    B.add_equality({0: 1.0}, 1.0)
    bases = [monomials_up_to(C, w) for C in cs.cliques]
    for k, C in enumerate(cs.cliques):
        B.add_block(bases[k], None, f"moment:{k}")
    n_eq = 0
    for h, k in zip(pop.system.equalities, cs.eq_assignment):
        if k < 0:
            raise ValueError("equality support not covered by any clique")
        if equality_mode == "full":
            mults = monomials_up_to(cs.cliques[k], 2 * w - h.degree())
        else:
            base = monomials_up_to(cs.cliques[k], w - math.ceil(h.degree() / 2))
            mults = list(dict.fromkeys(monomial_mul(a, b) for i, a in enumerate(base) for b in base[:i + 1]))
        hs = sc(h)
        for m in mults:
            B.add_equality(_normalized(B.linear(hs, m)))
            n_eq += 1

    def localize(g: Poly, kind: str):
        k = cs.covering(g.support())
        if k < 0:
            raise ValueError(f"{kind} support {sorted(g.support())} is not covered by any clique")
        dg = math.ceil(g.degree() / 2)
        if w - dg < 0:
            raise ValueError(f"relaxation order {w} too small for a degree-{g.degree()} {kind}")
        B.add_block(monomials_up_to(cs.cliques[k], w - dg), g, kind)

    for g in pop.system.inequalities:
        localize(sc(g), "inequality")
    if include_bounds:
        for v in range(n):
            x = Poly.var(v, n)
            localize(x - float(lbd[v]), "bound")
            localize(float(ubd[v]) - x, "bound")
        if bound_products:
            for v in range(n):
                x = Poly.var(v, n)
                localize((x - float(lbd[v])) * (float(ubd[v]) - x), "bound-product")
    for g in exclusions:
        if g.dimension != n:
            raise ValueError("exclusion dimension mismatch")
        localize(sc(g), "exclusion")
    obj = B.linear(sc(pop.objective))
    obj_scale = max((abs(v) for v in obj.values()), default=1.0) if scale else 1.0
    obj_scale = obj_scale or 1.0
    nv = len(B.index)
    c = np.zeros(nv)
    for k, v in obj.items():
        c[k] += v / obj_scale
    rows, cols, vals = [], [], []
    for r, row in enumerate(B.eq_rows):
        for k, v in row.items():
            rows.append(r)
            cols.append(k)
            vals.append(v)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(B.eq_rows), nv))
    blk = np.array([e[0] for e in B.entries], dtype=np.int64)
    row = np.array([e[1] for e in B.entries], dtype=np.int64)
    col = np.array([e[2] for e in B.entries], dtype=np.int64)
    var = np.array([e[3] for e in B.entries], dtype=np.int64)
    val = np.array([e[4] for e in B.entries], dtype=float)
    # y_0 is a genuine variable pinned by L(1) = 1; no separate constant term needed
    sdp = SDPProblem(nv, c, A, np.array(B.eq_rhs), B.blocks, blk, row, col, var, val)
    return RelaxedProblem(sdp, dict(B.index), np.arange(1, n + 1), cs, w, B.kinds, n_eq,
                          var_scale=vs, obj_scale=obj_scale)


def extract_point(rp: RelaxedProblem, sol: SDPSolution | np.ndarray) -> np.ndarray:
    """First-order moments ``L(x_i)`` as a candidate point."""
    y = sol.y if isinstance(sol, SDPSolution) else np.asarray(sol, dtype=float)
    for i, k in enumerate(rp.first_order):
        if rp.moment_index.get(((i, 1),)) != k:
            raise RuntimeError(f"first-order moment of x{i} missing from the relaxation")
    x = np.array(y[rp.first_order], dtype=float)
    return x * rp.var_scale if rp.var_scale is not None else x


def make_exclusion(u_prev: Solution | np.ndarray, eps1: float, eps2: float = 0.0,
                   b1: int = 0, b2: int = 0) -> list[Poly]:
    """``(u_j - u_prev_j)^2 - eps >= 0`` on the first ``b1`` psi and ``b2`` omega unknowns."""
    x = u_prev.point if isinstance(u_prev, Solution) else np.asarray(u_prev, dtype=float)
    n = len(x)
    half = n // 2
    if not (0 <= b1 <= half and 0 <= b2 <= half):
        raise IndexError(f"b1, b2 must lie in 0..{half}")
    if (b1 > 0 and eps1 <= 0) or (b2 > 0 and eps2 <= 0):
        raise ValueError("exclusion radii must be positive")
    out = []
    for j in list(range(b1)) + [half + j for j in range(b2)]:
        eps = eps1 if j < half else eps2
        d = Poly.var(j, n) - float(x[j])
        out.append(d * d - eps)
    return out


def make_lp_exclusion(u_prev: Solution | np.ndarray, eps: float, p: int = 2) -> Poly:
    """Dense ``sum_i (u_i - u_prev_i)^p - eps^p >= 0`` for even ``p``; couples all variables."""
    if p % 2 or p < 2:
        raise ValueError("p must be an even integer >= 2")
    x = u_prev.point if isinstance(u_prev, Solution) else np.asarray(u_prev, dtype=float)
    n = len(x)
    total = Poly.const(-(eps ** p), n)
    for i in range(n):
        total = total + (Poly.var(i, n) - float(x[i])) ** p
    return total


def with_aux_exclusions(pop: CavityPOP, u_prev: Solution | np.ndarray, eps: Sequence[float],
                        b: int) -> CavityPOP:
    """Append ``(u_i - u_prev_i) t_i - eps_i = 0`` with new unknowns ``t_i in [-1, 1]``.

    The returned POP is no longer square; use it with the relaxation only.
    """
    from .polysys import PolySystem

    x = u_prev.point if isinstance(u_prev, Solution) else np.asarray(u_prev, dtype=float)
    n = pop.dimension
    if len(eps) != b:
        raise ValueError("need one epsilon per excluded coordinate")
    n2 = n + b
    eqs = [p.with_dimension(n2) for p in pop.system.equalities]
    for i in range(b):
        eqs.append((Poly.var(i, n2) - float(x[i])) * Poly.var(n + i, n2) - float(eps[i]))
    ineqs = [p.with_dimension(n2) for p in pop.system.inequalities]
    system = PolySystem(tuple(eqs), tuple(ineqs), n2)
    lbd = np.concatenate([pop.lbd, -np.ones(b)])
    ubd = np.concatenate([pop.ubd, np.ones(b)])
    return CavityPOP(pop.objective.with_dimension(n2), system, lbd, ubd, pop.R, pop.v, pop.N, pop.scheme)
