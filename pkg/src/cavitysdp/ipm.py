"""Embedded primal-dual interior-point method for block LMI problems.

The equalities ``A y = b`` are eliminated first (``y = y0 + N z`` with an
orthonormal null-space basis ``N``), which leaves the dual-standard form

    max  -c~'z   s.t.  S(z) = G0 + sum_a z_a G_a  >= 0

over few variables.  Newton systems use the HKM direction with Mehrotra
predictor-corrector steps and a dense Schur complement.  Blocks of equal
size are batched, so a problem with many small localizing blocks costs
about as much as one with a few large moment blocks.

The hand-written iteration is reliable on strictly feasible problems; higher
order relaxations often lack a strict interior, and :func:`solve_lmi_cvxopt`
runs the same reduced problem through cvxopt instead.
"""
from __future__ import annotations

import logging
import time

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

CONST = -1


def nullspace_parametrization(A, b, rank_tol: float = 1e-10):
    """``(y0, N, Q1, R1, rows, inconsistent)`` with ``{y : A y = b} = y0 + range(N)``.

    ``rows`` are the independent equality rows; ``Q1 R1 = A[rows]'`` gives
    multipliers later through a triangular solve.
    """
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.zeros(n), np.eye(n), np.zeros((n, 0)), np.zeros((0, 0)), np.zeros(0, dtype=np.int64), False
    D = A.toarray() if hasattr(A, "toarray") else np.asarray(A, dtype=float)
    Q, R, piv = sla.qr(D.T, pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * max(diag[0] if diag.size else 0.0, 1.0)))
    rows = piv[:rank]
    Q1 = Q[:, :rank]
    R1 = R[:rank, :rank]
    # A[rows] y = b[rows]  <=>  R1' Q1' y = b[rows]
    u = sla.solve_triangular(R1, b[rows], trans="T")
    y0 = Q1 @ u
    inconsistent = bool(np.max(np.abs(D @ y0 - b), initial=0.0) > 1e-7 * (1.0 + np.max(np.abs(b), initial=0.0)))
    return y0, Q[:, rank:], Q1, R1, rows, inconsistent


class _Group:
    """All blocks of one dimension, stacked."""

    def __init__(self, d: int, blocks: list[int]):
        self.d = d
        self.blocks = blocks
        self.nb = len(blocks)


def _assemble(p, y0, Nmat):
    """Dense ``G0`` and ``G_a`` per block group, in the reduced variables."""
    m = Nmat.shape[1]
    dims = np.asarray(p.block_dims, dtype=np.int64)
    groups: dict[int, _Group] = {}
    for k, d in enumerate(dims):
        groups.setdefault(int(d), _Group(int(d), [])).blocks.append(k)
    out = []
    for d, g in sorted(groups.items()):
        g.nb = len(g.blocks)
        pos = {k: i for i, k in enumerate(g.blocks)}
        sel = np.isin(p.blk, g.blocks)
        bi = np.array([pos[k] for k in p.blk[sel]], dtype=np.int64)
        r, c, v, val = p.row[sel], p.col[sel], p.var[sel], p.val[sel]
        const = v == CONST
        G0 = np.zeros((g.nb, d, d))
        np.add.at(G0, (bi[const], r[const], c[const]), val[const])
        nc = ~const
        # variable entries contribute through y0 to G0 and through N to G_a
        np.add.at(G0, (bi[nc], r[nc], c[nc]), val[nc] * y0[v[nc]])
        Ga = np.zeros((m, g.nb, d, d))
        if m and np.any(nc):
            contrib = val[nc][:, None] * Nmat[v[nc], :]  # (nnz, m)
            flat = (bi[nc] * d + r[nc]) * d + c[nc]
            acc = np.zeros((g.nb * d * d, m))
            np.add.at(acc, flat, contrib)
            Ga = acc.T.reshape(m, g.nb, d, d)
        # entries were lower-triangle only: mirror the strict lower part
        G0 = G0 + np.tril(G0, -1).transpose(0, 2, 1)
        Ga = Ga + np.tril(Ga, -1).transpose(0, 1, 3, 2)
        g.G0 = G0
        g.Ga = Ga
        out.append(g)
    return out


def _ip(A, B):
    return float(np.sum(A * B))


def _max_step(Xs, dXs, frac: float) -> float:
    """Largest ``alpha <= 1`` (times ``frac``) keeping every ``X + alpha dX`` PSD."""
    alpha = 1.0
    for X, dX in zip(Xs, dXs):
        try:
            L = np.linalg.cholesky(X)
        except np.linalg.LinAlgError:
            return 0.0
        Linv = np.linalg.inv(L)
        M = Linv @ dX @ Linv.transpose(0, 2, 1)
        M = 0.5 * (M + M.transpose(0, 2, 1))
        lam = np.linalg.eigvalsh(M)[:, 0].min()
        if lam < 0:
            alpha = min(alpha, -frac / lam)
    return min(alpha, 1.0)


def _sym(M):
    return 0.5 * (M + M.transpose(0, 2, 1))


def solve_lmi(p, A, b, opts):
    """Solve an :class:`~cavitysdp.sdpsolve.SDPProblem` with equalities ``A y = b``.

    Returns ``(status, y, lam, Z, info)`` in the conventions of ``solve_sdp``;
    ``lam`` is indexed by the rows of ``A``.
    """
    t0 = time.perf_counter()
    y0, Nmat, Q1, R1, rows, inconsistent = nullspace_parametrization(A, np.asarray(b, dtype=float))
    m = Nmat.shape[1]
    groups = _assemble(p, y0, Nmat)
    t_setup = time.perf_counter() - t0
    ct = Nmat.T @ p.c
    const_obj = float(p.c @ y0)
    bvec = -ct  # SDPA data: A_a = -G_a, b_a = -ct_a, C = G0
    n_tot = sum(g.nb * g.d for g in groups)

    normC = max(1.0, np.sqrt(sum(_ip(g.G0, g.G0) for g in groups)))
    normA = np.array([np.sqrt(sum(_ip(g.Ga[a], g.Ga[a]) for g in groups)) for a in range(m)])
    xi = max(10.0, np.sqrt(max(g.d for g in groups)),
             max(((1 + abs(bvec[a])) / (1 + normA[a]) for a in range(m)), default=1.0) * max(g.d for g in groups))
    eta = max(10.0, np.sqrt(max(g.d for g in groups)), normC, float(np.max(normA, initial=0.0)))
    X = [xi * np.broadcast_to(np.eye(g.d), (g.nb, g.d, g.d)).copy() for g in groups]
    S = [eta * np.broadcast_to(np.eye(g.d), (g.nb, g.d, g.d)).copy() for g in groups]
    z = np.zeros(m)
    tol = min(opts.tol_gap, opts.tol_feas)
    status = "iteration-limit"
    it = 0
    hist = []

    def block_S(zv):
        return [g.G0 + np.tensordot(zv, g.Ga, axes=(0, 0)) if m else g.G0.copy() for g in groups]

    def apply_A(Ms):
        # <A_a, M> = -<G_a, M>
        out = np.zeros(m)
        for g, M in zip(groups, Ms):
            out -= g.Ga.reshape(m, -1) @ M.reshape(-1)
        return out

    normb = 1.0 + float(np.max(np.abs(bvec), initial=0.0))
    for it in range(opts.max_iter):
        Sz = block_S(z)
        Rd = [Sz_k - S_k for Sz_k, S_k in zip(Sz, S)]  # C - sum z_a A_a - S
        rp = bvec - apply_A(X)
        gap = sum(_ip(Xk, Sk) for Xk, Sk in zip(X, S))
        mu = gap / n_tot
        pobj = sum(_ip(g.G0, Xk) for g, Xk in zip(groups, X))  # primal objective <C, X>
        dobj = float(bvec @ z)
        pinf = float(np.max(np.abs(rp), initial=0.0)) / normb
        dinf = max((float(np.max(np.abs(r))) for r in Rd), default=0.0) / normC
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        hist.append((pinf, dinf, relgap))
        if opts.verbose:
            log.info("ipm %3d pinf %.2e dinf %.2e gap %.2e mu %.2e", it, pinf, dinf, relgap, mu)
        if pinf < tol and dinf < tol and relgap < tol:
            status = "optimal"
            break
        if abs(dobj) > opts.divergence_bound or abs(pobj) > opts.divergence_bound:
            status = "infeasible" if dobj > 0 else "unbounded"
            break
        Sinv = []
        try:
            for Sk in S:
                Li = np.linalg.inv(np.linalg.cholesky(Sk))
                Sinv.append(Li.transpose(0, 2, 1) @ Li)
        except np.linalg.LinAlgError:
            status = "numerical-error"
            break
        # Schur complement M_ab = <A_a, X A_b S^-1>
        Mschur = np.zeros((m, m))
        for g, Xk, Si in zip(groups, X, Sinv):
            T = np.matmul(np.matmul(Xk[None], g.Ga), Si[None])
            Mschur += g.Ga.reshape(m, -1) @ T.reshape(m, -1).T
        Mschur = 0.5 * (Mschur + Mschur.T)
        try:
            cf = sla.cho_factor(Mschur + 1e-14 * np.trace(Mschur) / max(m, 1) * np.eye(m))
            solveM = lambda r: sla.cho_solve(cf, r)
        except np.linalg.LinAlgError:
            lu = sla.lu_factor(Mschur + 1e-12 * np.trace(Mschur) / max(m, 1) * np.eye(m))
            solveM = lambda r: sla.lu_solve(lu, r)

        def direction(Rc):
            # dX = (Rc - X dS) S^-1, dS = Rd - sum dz_a A_a = Rd + sum dz_a G_a
            rhs = rp - apply_A([R @ Si for R, Si in zip(Rc, Sinv)]) + apply_A([Xk @ R @ Si for Xk, R, Si in zip(X, Rd, Sinv)])
            dz = solveM(rhs)
            for _ in range(opts.refine_steps + 1):
                dS = [R + (np.tensordot(dz, g.Ga, axes=(0, 0)) if m else 0.0) for g, R in zip(groups, Rd)]
                dX = [_sym((Rk - Xk @ dSk) @ Si) for Rk, Xk, dSk, Si in zip(Rc, X, dS, Sinv)]
                # the Schur matrix is badly conditioned near the optimum; correct
                # dz against the primal equations it is meant to satisfy
                err = rp - apply_A(dX)
                if not m or np.max(np.abs(err)) <= 1e-14 * normb:
                    break
                dz = dz + solveM(err)
            return dz, dX, dS

        XS = [Xk @ Sk for Xk, Sk in zip(X, S)]
        dz, dX, dS = direction([-xs for xs in XS])
        ap = _max_step(X, dX, 1.0)
        ad = _max_step(S, dS, 1.0)
        gap_aff = sum(_ip(Xk + ap * dXk, Sk + ad * dSk) for Xk, dXk, Sk, dSk in zip(X, dX, S, dS))
        sigma = min(1.0, (gap_aff / gap) ** 3) if gap > 0 else 0.0
        I = [np.broadcast_to(np.eye(g.d), (g.nb, g.d, g.d)) for g in groups]
        Rc = [sigma * mu * Ik - xs - dXk @ dSk for Ik, xs, dXk, dSk in zip(I, XS, dX, dS)]
        dz, dX, dS = direction(Rc)
        frac = 0.95 if it > 2 else 0.9
        ap = min(1.0, frac * _max_step(X, dX, 1.0))
        ad = min(1.0, frac * _max_step(S, dS, 1.0))
        if max(ap, ad) < 1e-10:
            status = "slow-progress"
            break
        X = [_sym(Xk + ap * dXk) for Xk, dXk in zip(X, dX)]
        S = [_sym(Sk + ad * dSk) for Sk, dSk in zip(S, dS)]
        z = z + ad * dz
    if status in ("numerical-error", "slow-progress", "iteration-limit") and hist and max(hist[-1]) < 1e-6:
        # stalled close to the optimum; solve_sdp grades it from recomputed residuals
        status = "almost-optimal"
    y, lam, Z = _recover(p, A, y0, Nmat, Q1, R1, rows, z, groups, X)
    if inconsistent:
        status = "infeasible"
    info = {"iterations": it + 1, "setup_time": t_setup, "solve_time": time.perf_counter() - t0,
            "reduced_vars": m, "history": hist, "backend_status": status}
    return status, y, lam, Z, info


def _recover(p, A, y0, Nmat, Q1, R1, rows, z, groups, Xs):
    """Original variables, equality multipliers and block multipliers in block order."""
    y = y0 + Nmat @ z
    Z = []
    for g, Xk in zip(groups, Xs):
        for i, k in enumerate(g.blocks):
            Z.append((k, 0.5 * (Xk[i] + Xk[i].T)))
    Z = [M for _, M in sorted(Z, key=lambda kv: kv[0])]
    FZ, _ = p.adjoint(Z)
    lam = np.zeros(A.shape[0])
    if len(rows):
        # A[rows]' lam = c - F*(Z) in the least-squares sense
        lam[rows] = sla.solve_triangular(R1, Q1.T @ (p.c - FZ))
    return y, lam, Z


def solve_lmi_cvxopt(p, A, b, opts):
    """Same reduction as :func:`solve_lmi`, handed to ``cvxopt.solvers.sdp``.

    Scalar blocks go in cvxopt's linear cone.  cvxopt drifts once the problem
    has no strict interior, so its stopping tolerances are tied to the 1e-7
    grading threshold of ``solve_sdp`` rather than to ``opts.tol_gap``.
    """
    from cvxopt import matrix, solvers

    t0 = time.perf_counter()
    y0, Nmat, Q1, R1, rows, inconsistent = nullspace_parametrization(A, np.asarray(b, dtype=float))
    m = Nmat.shape[1]
    groups = _assemble(p, y0, Nmat)
    t_setup = time.perf_counter() - t0
    ct = Nmat.T @ p.c
    if m == 0:
        y, lam, Z = _recover(p, A, y0, Nmat, Q1, R1, rows, np.zeros(0), groups,
                             [np.zeros_like(g.G0) for g in groups])
        feasible = all(np.linalg.eigvalsh(g.G0).min() >= -1e-9 for g in groups)
        return ("optimal" if feasible else "infeasible"), y, lam, Z, {"reduced_vars": 0, "setup_time": t_setup}
    # S(z) = G0 + sum z_a G_a  ->  cvxopt's  h - G z  with G = -vec(G_a)
    Gl, hl, Gs, hs = [], [], [], []
    for g in groups:
        if g.d == 1:
            Gl.append(-g.Ga[:, :, 0, 0].T)
            hl.append(g.G0[:, 0, 0])
        else:
            for i in range(g.nb):
                Gs.append(matrix(-g.Ga[:, i].reshape(m, -1).T.copy()))
                hs.append(matrix(g.G0[i].copy()))
    kw = {}
    if Gl:
        kw["Gl"] = matrix(np.vstack(Gl))
        kw["hl"] = matrix(np.concatenate(hl))
    if Gs:
        kw["Gs"], kw["hs"] = Gs, hs
    options = {"show_progress": opts.verbose, "maxiters": min(opts.max_iter, opts.cvxopt_max_iter),
               "abstol": 1e-6, "reltol": 1e-6, "feastol": 1e-7}
    res = solvers.sdp(matrix(ct), options=options, **kw)
    # cvxopt calls the LMI side "primal": its primal infeasibility means no
    # feasible z, its dual infeasibility an unbounded objective
    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "unbounded"}.get(res["status"], "almost-optimal")
    x = np.zeros(m) if res["x"] is None else np.array(res["x"]).ravel()
    Xs = []
    zl = np.array(res["zl"]).ravel() if Gl and res["zl"] is not None else None
    zs = iter(res["zs"] or [])
    pos = 0
    for g in groups:
        if g.d == 1:
            blk = np.zeros((g.nb, 1, 1))
            if zl is not None:
                blk[:, 0, 0] = zl[pos:pos + g.nb]
            pos += g.nb
        else:
            blk = np.stack([np.array(next(zs, matrix(0.0, (g.d, g.d)))) for _ in range(g.nb)])
        Xs.append(blk)
    y, lam, Z = _recover(p, A, y0, Nmat, Q1, R1, rows, x, groups, Xs)
    if inconsistent:
        status = "infeasible"
    info = {"iterations": int(res.get("iterations", 0)), "setup_time": t_setup,
            "solve_time": time.perf_counter() - t0, "reduced_vars": m,
            "backend_status": res["status"]}
    return status, y, lam, Z, info
