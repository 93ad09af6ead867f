"""Block-diagonal SDPs in linear-matrix-inequality form.

The problem over a free vector ``y`` is::

    minimize    c' y
    subject to  A y = b
                M_k(y) = F_k0 + sum_a y_a F_ka  is PSD,  k = 1..K

Each ``F_ka`` is stored as lower-triangle COO entries.  Blocks of size one are
scalar non-negativity constraints.  The dual is::

    maximize    b' lam - sum_k <F_k0, Z_k>
    subject to  A' lam + sum_k F_k*(Z_k) = c,   Z_k PSD

with ``F_k*(Z)_a = <F_ka, Z>``.  :func:`kkt_residuals` recomputes every
residual from the returned ``y``, ``lam`` and ``Z_k``; it never trusts the
backend's own estimates.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

CONST = -1  # variable index of the constant term F_k0


@dataclass
class SDPProblem:
    n_vars: int
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    block_dims: list[int]
    # lower-triangle entries: block, row, col, var (CONST for F_k0), value
    blk: np.ndarray
    row: np.ndarray
    col: np.ndarray
    var: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csr_matrix(self.A)
        self.blk = np.asarray(self.blk, dtype=np.int64)
        self.row = np.asarray(self.row, dtype=np.int64)
        self.col = np.asarray(self.col, dtype=np.int64)
        self.var = np.asarray(self.var, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=float)
        dims = np.asarray(self.block_dims, dtype=np.int64)
        if self.c.shape != (self.n_vars,) or self.A.shape[1] != self.n_vars:
            raise ValueError("objective / equality width must equal n_vars")
        if self.A.shape[0] != len(self.b):
            raise ValueError("A and b disagree on the number of equalities")
        if len(self.blk):
            if self.blk.min() < 0 or self.blk.max() >= len(dims):
                raise ValueError("block index out of range")
            if np.any(self.row >= dims[self.blk]) or np.any(self.col > self.row) or np.any(self.col < 0):
                raise ValueError("entries must lie in the lower triangle of their block")
            if np.any(self.var >= self.n_vars) or np.any(self.var < CONST):
                raise ValueError("entry variable index out of range")

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)

    def block_matrices(self, y) -> list[np.ndarray]:
        """``M_k(y)`` for every block."""
        y = np.asarray(y, dtype=float)
        yy = np.where(self.var == CONST, 1.0, y[np.maximum(self.var, 0)])
        contrib = self.val * yy
        mats = [np.zeros((d, d)) for d in self.block_dims]
        order = np.argsort(self.blk, kind="stable")
        bounds = np.searchsorted(self.blk[order], np.arange(self.n_blocks + 1))
        for k in range(self.n_blocks):
            sel = order[bounds[k]:bounds[k + 1]]
            M = mats[k]
            np.add.at(M, (self.row[sel], self.col[sel]), contrib[sel])
            off = self.row[sel] != self.col[sel]
            np.add.at(M, (self.col[sel][off], self.row[sel][off]), contrib[sel][off])
        return mats

    def adjoint(self, Z: list[np.ndarray]) -> tuple[np.ndarray, float]:
        """``(F*(Z) over variables, sum_k <F_k0, Z_k>)``."""
        flat = np.concatenate([np.asarray(Zk, dtype=float).ravel() for Zk in Z]) if Z else np.zeros(0)
        start = np.concatenate([[0], np.cumsum(np.asarray(self.block_dims, dtype=np.int64) ** 2)])
        dims = np.asarray(self.block_dims, dtype=np.int64)
        zval = flat[start[self.blk] + self.row * dims[self.blk] + self.col] if len(self.blk) else np.zeros(0)
        w = self.val * zval * np.where(self.row == self.col, 1.0, 2.0)
        isc = self.var == CONST
        out = np.bincount(self.var[~isc], weights=w[~isc], minlength=self.n_vars)
        return out, float(w[isc].sum())


@dataclass
class SDPOptions:
    # "auto" uses the null-space reduced cvxopt path when a block exceeds ipm_block_threshold
    # and at most reduced_vars_limit moments stay free, clarabel otherwise
    backend: str = "auto"
    ipm_block_threshold: int = 40
    reduced_vars_limit: int = 1500
    tol_gap: float = 1e-9
    tol_feas: float = 1e-9
    max_iter: int = 300
    # Schur-solve refinement passes in the embedded IPM
    refine_steps: int = 2
    cvxopt_max_iter: int = 40
    presolve: bool = True
    verbose: bool = False
    # dual objective above this counts as divergence -> infeasible
    divergence_bound: float = 1e12


@dataclass
class SDPSolution:
    status: str
    y: np.ndarray
    lam: np.ndarray
    Z: list[np.ndarray]
    primal_objective: float
    dual_objective: float
    residuals: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def X(self) -> list[np.ndarray]:
        return self.info.get("blocks", [])

    @property
    def converged(self) -> bool:
        return self.status == "optimal"


def kkt_residuals(p: SDPProblem, s: SDPSolution) -> dict:
    """Residuals recomputed from ``(y, lam, Z)``: feasibility, PSD margins, duality gap."""
    y = np.asarray(s.y, dtype=float)
    primal = float(np.max(np.abs(p.A @ y - p.b), initial=0.0))
    blocks = p.block_matrices(y)
    min_eig_primal = min((float(np.linalg.eigvalsh(M)[0]) for M in blocks), default=0.0)
    FZ, F0Z = p.adjoint(s.Z)
    dual = float(np.max(np.abs(p.c - p.A.T @ s.lam - FZ), initial=0.0))
    min_eig_dual = min((float(np.linalg.eigvalsh(Zk)[0]) for Zk in s.Z), default=0.0)
    pobj = float(p.c @ y)
    dobj = float(p.b @ s.lam - F0Z)
    return {
        "primal_feas": primal,
        "dual_feas": dual,
        "min_eig_primal": min_eig_primal,
        "min_eig_dual": min_eig_dual,
        "primal_objective": pobj,
        "dual_objective": dobj,
        "gap": pobj - dobj,
        "rel_gap": abs(pobj - dobj) / (1.0 + abs(pobj)),
    }


def presolve_equalities(A: sp.csr_matrix, b: np.ndarray, rank_tol: float = 1e-10,
                        dense_limit: int = 4_000_000):
    """Drop duplicate and linearly dependent rows of ``A y = b``.

    Returns ``(A', b', kept_rows, inconsistent)``.  Exact duplicates are
    removed structurally; the rank test (QR with column pivoting on ``A'``)
    runs only when the dense matrix fits ``dense_limit`` entries.
    """
    A = sp.csr_matrix(A)
    m = A.shape[0]
    if m == 0:
        return A, b, np.arange(0), False
    # structural dedup of identical rows (after scaling by the leading entry)
    seen = {}
    keep = []
    inconsistent = False
    for r in range(m):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        if hi == lo:
            if abs(b[r]) > 1e-9:
                inconsistent = True
            continue
        cols = A.indices[lo:hi]
        vals = A.data[lo:hi]
        order = np.argsort(cols)
        cols, vals = cols[order], vals[order]
        lead = vals[0]
        key = (tuple(cols), tuple(np.round(vals / lead, 12)))
        if key in seen:
            r0, lead0 = seen[key]
            if abs(b[r] / lead - b[r0] / lead0) > 1e-9 * (1 + abs(b[r0] / lead0)):
                inconsistent = True
            continue
        seen[key] = (r, lead)
        keep.append(r)
    keep = np.asarray(keep, dtype=np.int64)
    A1 = A[keep]
    b1 = b[keep]
    if A1.shape[0] * A1.shape[1] <= dense_limit and A1.shape[0] > 1:
        D = A1.toarray()
        # column pivoting on A'^T picks a maximal independent row subset of A'
        _, Rq, piv = sla.qr(D.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(Rq))
        rank = int(np.sum(diag > rank_tol * max(diag[0], 1.0))) if diag.size else 0
        if rank < A1.shape[0]:
            sel = np.sort(piv[:rank])
            rest = np.setdiff1d(np.arange(A1.shape[0]), sel)
            coef, *_ = np.linalg.lstsq(D[sel].T, D[rest].T, rcond=None)
            if np.max(np.abs(coef.T @ b1[sel] - b1[rest]), initial=0.0) > 1e-7 * (1 + np.abs(b1).max()):
                inconsistent = True
            keep = keep[sel]
            A1 = A1[sel]
            b1 = b1[sel]
    return A1, b1, keep, inconsistent


def _solve_clarabel(p: SDPProblem, A: sp.csr_matrix, b: np.ndarray, opts: SDPOptions):
    import clarabel

    n = p.n_vars
    dims = np.asarray(p.block_dims, dtype=np.int64)
    scalar_blocks = np.flatnonzero(dims == 1)
    psd_blocks = np.flatnonzero(dims > 1)
    # row offsets in the stacked cone constraint
    m_eq = A.shape[0]
    offset = np.zeros(p.n_blocks, dtype=np.int64)
    cur = m_eq
    for k in scalar_blocks:
        offset[k] = cur
        cur += 1
    for k in psd_blocks:
        offset[k] = cur
        d = int(dims[k])
        cur += d * (d + 1) // 2
    m_total = cur
    # (row >= col) -> upper-triangle column-major position row*(row+1)/2 + col
    rr = offset[p.blk] + p.row * (p.row + 1) // 2 + p.col
    scale = np.where(p.row == p.col, 1.0, math.sqrt(2.0))
    isc = p.var == CONST
    # s = b - A x  with s = svec(M(y))  ->  A_rows = -F_a,  b_rows = F_0
    Acone = sp.csc_matrix((-(p.val * scale)[~isc], (rr[~isc], p.var[~isc])), shape=(m_total, n))
    bcone = np.zeros(m_total)
    np.add.at(bcone, rr[isc], (p.val * scale)[isc])
    Aeq = sp.csc_matrix(A)
    Afull = sp.vstack([sp.csc_matrix((Aeq.data, Aeq.indices, Aeq.indptr), shape=Aeq.shape),
                       Acone[m_eq:]], format="csc")
    bfull = np.concatenate([b, bcone[m_eq:]])
    cones = []
    if m_eq:
        cones.append(clarabel.ZeroConeT(m_eq))
    if len(scalar_blocks):
        cones.append(clarabel.NonnegativeConeT(len(scalar_blocks)))
    for k in psd_blocks:
        cones.append(clarabel.PSDTriangleConeT(int(dims[k])))
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = opts.max_iter
    settings.tol_gap_abs = opts.tol_gap
    settings.tol_gap_rel = opts.tol_gap
    settings.tol_feas = opts.tol_feas
    P = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, p.c, Afull, bfull, cones, settings)
    res = solver.solve()
    status = str(res.status)
    y = np.asarray(res.x, dtype=float)
    z = np.asarray(res.z, dtype=float)
    lam = -z[:m_eq]
    Z = [np.zeros((int(d), int(d))) for d in dims]
    for k in scalar_blocks:
        Z[k][0, 0] = z[offset[k]]
    for k in psd_blocks:
        d = int(dims[k])
        seg = z[offset[k]: offset[k] + d * (d + 1) // 2]
        Zk = np.zeros((d, d))
        # lower-triangle row-major order == upper-triangle column-major order transposed
        hi, lo = np.tril_indices(d)
        Zk[lo, hi] = seg
        Zk = Zk + Zk.T - np.diag(np.diag(Zk))
        Zk[~np.eye(d, dtype=bool)] /= math.sqrt(2.0)
        Z[k] = Zk
    mapping = {
        "Solved": "optimal",
        "AlmostSolved": "almost-optimal",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
        "MaxIterations": "iteration-limit",
        "MaxTime": "iteration-limit",
        "InsufficientProgress": "slow-progress",
        "NumericalError": "numerical-error",
    }
    return mapping.get(status, status), y, lam, Z, {"backend_status": status,
                                                    "iterations": int(res.iterations),
                                                    "solve_time": float(res.solve_time)}


def solve_sdp(p: SDPProblem, opts: SDPOptions | None = None) -> SDPSolution:
    """Solve ``p``; the returned status is one of ``optimal``, ``infeasible``,
    ``unbounded``, ``slow-progress``, ``iteration-limit``, ``numerical-error``.

    ``optimal`` is only reported when the independently recomputed residuals
    meet ``1e-7`` feasibility and a ``1e-7 (1 + |obj|)`` duality gap.
    """
    opts = opts or SDPOptions()
    A, b, kept, inconsistent = (presolve_equalities(p.A, p.b) if opts.presolve
                                else (p.A, p.b, np.arange(p.A.shape[0]), False))
    if inconsistent:
        log.warning("equality constraints are inconsistent")
    backend = opts.backend
    if backend == "auto":
        # the reduced path pays off for a few hundred free moments in large
        # blocks; with thousands of free moments its dense data is too big
        big = max(p.block_dims, default=0) > opts.ipm_block_threshold
        small_nullspace = p.n_vars - A.shape[0] <= opts.reduced_vars_limit
        backend = "cvxopt" if big and small_nullspace else "clarabel"
    if backend == "clarabel":
        status, y, lam_k, Z, info = _solve_clarabel(p, A, b, opts)
    elif backend == "ipm":
        from .ipm import solve_lmi
        status, y, lam_k, Z, info = solve_lmi(p, A, b, opts)
    elif backend == "cvxopt":
        from .ipm import solve_lmi_cvxopt
        status, y, lam_k, Z, info = solve_lmi_cvxopt(p, A, b, opts)
    else:
        raise ValueError(f"unknown SDP backend {opts.backend!r}")
    lam = np.zeros(p.A.shape[0])
    lam[kept] = lam_k
    info["backend"] = backend
    sol = SDPSolution(status=status, y=y, lam=lam, Z=Z,
                      primal_objective=float(p.c @ y), dual_objective=float("nan"), info=info)
    if not np.all(np.isfinite(y)):
        # certificates of infeasibility come without a usable iterate
        if status not in ("infeasible", "unbounded"):
            sol.status = "numerical-error"
        return sol
    res = kkt_residuals(p, sol)
    sol.residuals = res
    sol.dual_objective = res["dual_objective"]
    if res["dual_objective"] > opts.divergence_bound:
        sol.status = "infeasible"
    if inconsistent:
        sol.status = "infeasible"
    ok = (res["primal_feas"] <= 1e-7 and res["dual_feas"] <= 1e-7
          and res["min_eig_primal"] >= -1e-7 and res["min_eig_dual"] >= -1e-7
          and res["rel_gap"] <= 1e-7)
    if sol.status in ("optimal", "almost-optimal"):
        sol.status = "optimal" if ok else "inaccurate"
    return sol


# ---------------------------------------------------------------------------
# sparse text format

FORMAT_HEADER = "# cavitysdp sparse SDP v1"


def write_sdp(p: SDPProblem, fh) -> None:
    """Write ``p`` in the sparse text format.

    Layout (whitespace separated)::

        # cavitysdp sparse SDP v1
        nvars <n>
        nblocks <K>
        blocks <d_1> ... <d_K>
        neq <m>
        objective <nnz>
        <var> <value>                      (nnz lines)
        <constraint> <block> <row> <col> <value>  (one line per nonzero)

    ``constraint`` is 0 for the constant term and ``a + 1`` for variable
    ``a``.  ``block`` 0 holds the equalities: ``(a+1, 0, r, 0, v)`` is ``A[r, a]``
    and ``(0, 0, r, 0, v)`` is ``b[r]``.  Blocks ``1..K`` are the PSD blocks,
    lower-triangle entries, 0-based rows and columns.
    """
    w = fh.write
    w(FORMAT_HEADER + "\n")
    w(f"nvars {p.n_vars}\nnblocks {p.n_blocks}\n")
    w("blocks " + " ".join(str(int(d)) for d in p.block_dims) + "\n")
    w(f"neq {p.A.shape[0]}\n")
    nz = np.flatnonzero(p.c)
    w(f"objective {len(nz)}\n")
    for a in nz:
        w(f"{a} {float(p.c[a])!r}\n")
    A = sp.coo_matrix(p.A)
    for r, a, v in zip(A.row, A.col, A.data):
        w(f"{a + 1} 0 {r} 0 {float(v)!r}\n")
    for r in np.flatnonzero(p.b):
        w(f"0 0 {r} 0 {float(p.b[r])!r}\n")
    for k, r, c, a, v in zip(p.blk, p.row, p.col, p.var, p.val):
        w(f"{a + 1} {k + 1} {r} {c} {float(v)!r}\n")


def read_sdp(fh) -> SDPProblem:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValueError("not a cavitysdp sparse SDP file")
    it = iter(lines[1:])

    def field_(name):
        parts = next(it).split()
        if parts[0] != name:
            raise ValueError(f"expected {name!r}, got {parts[0]!r}")
        return parts[1:]

    n = int(field_("nvars")[0])
    K = int(field_("nblocks")[0])
    dims = [int(d) for d in field_("blocks")]
    if len(dims) != K:
        raise ValueError("block count mismatch")
    m = int(field_("neq")[0])
    nobj = int(field_("objective")[0])
    c = np.zeros(n)
    for _ in range(nobj):
        a, v = next(it).split()
        c[int(a)] = float(v)
    ar, ac, av = [], [], []
    b = np.zeros(m)
    blk, row, col, var, val = [], [], [], [], []
    for ln in it:
        a, k, r, cc, v = ln.split()
        a, k, r, cc, v = int(a), int(k), int(r), int(cc), float(v)
        if k == 0:
            if a == 0:
                b[r] = v
            else:
                ar.append(r)
                ac.append(a - 1)
                av.append(v)
        else:
            blk.append(k - 1)
            row.append(r)
            col.append(cc)
            var.append(a - 1)
            val.append(v)
    A = sp.csr_matrix((av, (ar, ac)), shape=(m, n))
    return SDPProblem(n, c, A, b, dims, np.array(blk, dtype=np.int64), np.array(row, dtype=np.int64),
                      np.array(col, dtype=np.int64), np.array(var, dtype=np.int64), np.array(val))
