import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from cavitysdp.sdprelax import build_relaxation
from cavitysdp.sdpsolve import (CONST, SDPOptions, SDPProblem, SDPSolution, kkt_residuals,
                                presolve_equalities, read_sdp, solve_sdp, write_sdp)

BACKENDS = ["clarabel", "ipm", "cvxopt"]


def toy(a=1.0, pin=3.0):
    """min y0  s.t.  [[a, y0], [y0, a]] PSD,  y1 = pin,  y1 >= 0."""
    return SDPProblem(
        n_vars=2, c=np.array([1.0, 0.0]), A=sp.csr_matrix(np.array([[0.0, 1.0]])), b=np.array([pin]),
        block_dims=[2, 1],
        blk=[0, 0, 0, 1], row=[0, 1, 1, 0], col=[0, 1, 0, 0], var=[CONST, CONST, 0, 1],
        val=[a, a, 1.0, 1.0])


def test_analytic_kkt_point_has_zero_residuals():
    p = toy()
    s = SDPSolution("optimal", y=np.array([-1.0, 3.0]), lam=np.array([0.0]),
                    Z=[np.full((2, 2), 0.5), np.zeros((1, 1))],
                    primal_objective=-1.0, dual_objective=-1.0)
    r = kkt_residuals(p, s)
    for key in ("primal_feas", "dual_feas", "gap"):
        assert abs(r[key]) <= 1e-12
    assert min(r["min_eig_primal"], r["min_eig_dual"]) >= -1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_toy_on_every_backend(backend):
    p = toy()
    s = solve_sdp(p, SDPOptions(backend=backend))
    assert s.status == "optimal"
    assert s.y[0] == pytest.approx(-1.0, abs=1e-6)
    assert s.y[1] == pytest.approx(3.0, abs=1e-7)
    r = s.residuals
    assert r["primal_feas"] <= 1e-7 and r["dual_feas"] <= 1e-7
    assert min(r["min_eig_primal"], r["min_eig_dual"]) >= -1e-7
    # weak duality
    assert r["primal_objective"] >= r["dual_objective"] - 1e-7
    assert s.info["backend"] == backend


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 10.0))
def test_toy_perturbation(a):
    s = solve_sdp(toy(a), SDPOptions(backend="clarabel"))
    assert s.status == "optimal"
    assert s.primal_objective == pytest.approx(-a, rel=1e-6)


def test_infeasible_toy():
    # [[y, 1], [1, y]] PSD with y = -2
    p = SDPProblem(1, np.array([1.0]), sp.csr_matrix(np.ones((1, 1))), np.array([-2.0]), [2],
                   blk=[0, 0, 0], row=[0, 1, 1], col=[0, 1, 0], var=[0, 0, CONST], val=[1.0, 1.0, 1.0])
    assert solve_sdp(p, SDPOptions(presolve=False)).status == "infeasible"


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve_sdp(toy(), SDPOptions(backend="nope"))


def test_problem_validation():
    with pytest.raises(ValueError):
        SDPProblem(1, np.ones(1), sp.csr_matrix((0, 1)), np.zeros(0), [2],
                   blk=[0], row=[0], col=[1], var=[0], val=[1.0])


def test_presolve_drops_dependent_rows():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [2.0, 2.0], [1.0, -1.0]]))
    A2, b2, kept, bad = presolve_equalities(A, np.array([1.0, 2.0, 0.0]))
    assert A2.shape[0] == 2 and not bad
    *_, bad = presolve_equalities(A, np.array([1.0, 3.0, 0.0]))
    assert bad


def test_sdpr1_residuals_on_linear_problem(pop0):
    rp = build_relaxation(pop0, 1)
    for backend in ("clarabel", "cvxopt"):
        s = solve_sdp(rp.sdp, SDPOptions(backend=backend))
        r = s.residuals
        assert s.status == "optimal"
        assert r["primal_feas"] <= 1e-7 and r["dual_feas"] <= 1e-7
        assert min(r["min_eig_primal"], r["min_eig_dual"]) >= -1e-7
        assert r["primal_objective"] >= r["dual_objective"] - 1e-7


def test_write_read_round_trip(pop0):
    for p in (toy(), build_relaxation(pop0, 1).sdp):
        buf = io.StringIO()
        write_sdp(p, buf)
        q = read_sdp(buf.getvalue())
        assert q.n_vars == p.n_vars and q.block_dims == p.block_dims
        assert np.array_equal(q.c, p.c) and np.array_equal(q.b, p.b)
        assert (q.A != p.A).nnz == 0
        y = np.random.default_rng(0).normal(size=p.n_vars)
        for M1, M2 in zip(p.block_matrices(y), q.block_matrices(y)):
            assert np.array_equal(M1, M2)
        buf2 = io.StringIO()
        write_sdp(q, buf2)
        assert buf2.getvalue() == buf.getvalue()


def test_read_rejects_garbage():
    with pytest.raises(ValueError):
        read_sdp("hello\n")
