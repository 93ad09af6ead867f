import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavitysdp.cavity import (GridMap, Solution, arakawa_bracket, build_adscf, build_dscf,
                              build_energy, build_pop, central_bracket, default_bounds,
                              energy_value, velocity_field)
from cavitysdp.localopt import newton_iterate
from cavitysdp.polysys import poly_grad


@pytest.mark.parametrize("N", [4, 5, 9, 20])
def test_variable_count(N):
    assert build_dscf(10.0, 1.0, N).dimension == 2 * (N - 2) ** 2
    assert build_dscf(10.0, 1.0, N).is_square()


def test_grid_rejects_tiny_N():
    with pytest.raises(ValueError):
        GridMap(3)


def test_index_layout_psi_then_omega():
    g = GridMap(5)
    assert g.psi_index(2, 2) == 0
    assert g.psi_index(3, 2) == 1  # i runs fastest
    assert g.psi_index(2, 3) == 3
    assert g.omega_index(2, 2) == 9
    with pytest.raises(IndexError):
        g.psi_index(1, 2)


def test_full_grids_boundary_formulas(rng):
    g = GridMap(6)
    x = rng.normal(size=g.dimension)
    psi, om = g.full_grids(x, 0.7)
    h = g.h
    assert np.all(psi[0] == 0) and np.all(psi[-1] == 0)
    assert np.allclose(om[-1, 1:-1], -(2 * psi[-2, 1:-1] + 2 * 0.7 * h) / h**2, rtol=0, atol=0)
    assert np.array_equal(om[0, 1:-1], -2.0 * psi[1, 1:-1] / h**2)
    assert np.array_equal(g.from_full_grids(psi, om), x)


def test_linear_solution_energy():
    s = build_dscf(0.0, 1.0, 5)
    x, status, iters, _ = newton_iterate(s, np.zeros(s.dimension))
    assert status == "converged" and iters == 1
    assert energy_value(x, 5) == pytest.approx(0.0096, rel=0.05)
    assert build_energy(5)(x) == pytest.approx(energy_value(x, 5), rel=1e-12)


def test_energy_hessian_psd():
    for N in (5, 8):
        F = build_energy(N)
        n = F.dimension
        H = np.array([[gij(np.zeros(n)) for gij in poly_grad(gi)] for gi in poly_grad(F)])
        assert np.allclose(H, H.T)
        assert np.linalg.eigvalsh(H).min() >= -1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(4, 9), st.integers(0, 2**31 - 1))
def test_energy_nonnegative(N, seed):
    x = np.random.default_rng(seed).normal(scale=10, size=2 * (N - 2) ** 2)
    assert build_energy(N)(x) >= 0.0
    assert energy_value(x, N) >= 0.0


def _grid_accessor(a):
    return lambda i, j: a[j, i]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_arakawa_skew_and_conservation(seed):
    rng = np.random.default_rng(seed)
    n = 12
    # compactly supported fields: sums over the grid telescope exactly
    P = np.zeros((n, n)); W = np.zeros((n, n))
    P[3:-3, 3:-3] = rng.normal(size=(n - 6, n - 6))
    W[3:-3, 3:-3] = rng.normal(size=(n - 6, n - 6))
    pts = [(i, j) for j in range(1, n - 1) for i in range(1, n - 1)]
    J = np.array([arakawa_bracket(_grid_accessor(P), _grid_accessor(W), i, j) for i, j in pts])
    Jr = np.array([arakawa_bracket(_grid_accessor(W), _grid_accessor(P), i, j) for i, j in pts])
    scale = 1 + np.abs(J).max()
    assert np.max(np.abs(J + Jr)) <= 1e-12 * scale
    assert abs(J.sum()) <= 1e-12 * scale * len(pts)
    Pv = np.array([P[j, i] for i, j in pts]); Wv = np.array([W[j, i] for i, j in pts])
    assert abs(Pv @ J) <= 1e-11 * scale * len(pts)
    assert abs(Wv @ J) <= 1e-11 * scale * len(pts)


def test_arakawa_matches_central_on_linear_fields():
    # for linear P and W both brackets reduce to the exact Jacobian
    P = lambda i, j: 2.0 * i + 0.5 * j
    W = lambda i, j: -1.0 * i + 3.0 * j
    c = central_bracket(P, W, 4, 4)
    a = arakawa_bracket(P, W, 4, 4)
    assert c == pytest.approx(4 * (2 * 3 - 0.5 * (-1)))
    assert -a / 12 == pytest.approx(c / 4)


def test_adscf_equals_dscf_at_zero_reynolds():
    for N in (5, 7):
        assert build_adscf(0.0, 1.0, N).equalities == build_dscf(0.0, 1.0, N).equalities


def test_schemes_agree_to_leading_order(rng):
    # both discretize the same bracket; on a smooth field they differ by O(h^2)
    N = 30
    g = GridMap(N)
    X, Y = np.meshgrid(np.arange(N) * g.h, np.arange(N) * g.h)
    psi = (np.sin(np.pi * X) * np.sin(np.pi * Y))[1:-1, 1:-1].ravel() * 0.01
    om = (np.cos(np.pi * X) * np.sin(2 * np.pi * Y))[1:-1, 1:-1].ravel()
    x = np.concatenate([psi, om])
    rc = build_dscf(100.0, 0.0, N).residual(x) - build_dscf(0.0, 0.0, N).residual(x)
    ra = build_adscf(100.0, 0.0, N).residual(x) - build_adscf(0.0, 0.0, N).residual(x)
    half = g.n_interior
    m = N - 2
    deep = (slice(4, -4), slice(4, -4))  # away from the substituted wall vorticity
    dc = rc[half:].reshape(m, m)[deep]
    da = ra[half:].reshape(m, m)[deep]
    assert np.abs(dc - da).max() < 0.05 * np.abs(dc).max()
    assert np.allclose(rc[:half], ra[:half])


def test_default_bounds():
    lbd, ubd = default_bounds(1.0, 5)
    h = 0.25
    assert np.all(lbd[:9] == -1.0)
    assert ubd[9] == pytest.approx((2 + 2 * h) / h**2)
    with pytest.raises(ValueError):
        default_bounds(0.0, 5)
    with pytest.raises(ValueError):
        build_pop(0.0, 1.0, 5, bounds=(ubd, lbd))


def test_velocity_field_zero_and_scaling():
    g = GridMap(6)
    zero = Solution(np.zeros(g.dimension), 0.0, 0.0, "newton", N=6)
    vf = velocity_field(zero, 3.0)
    assert len(vf) == 16 and np.all(vf.u == 0) and np.all(vf.v == 0)
    s = build_dscf(0.0, 1.0, 6)
    x, *_ = newton_iterate(s, np.zeros(s.dimension))
    sol = Solution(x, energy_value(x, 6), 0.0, "linear-solve", N=6)
    v1, v2 = velocity_field(sol, 1.0), velocity_field(sol, 2.0)
    assert np.array_equal(2.0 * v1.u, v2.u) and np.array_equal(2.0 * v1.v, v2.v)
    # the row below the lid moves with the lid
    top = v1.y == v1.y.max()
    assert np.all(v1.u[top] > 0)
