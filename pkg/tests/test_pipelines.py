import io

import numpy as np
import pytest

from cavitysdp.cavity import build_dscf
from cavitysdp.localopt import scaled_residual
from cavitysdp.pipelines import (ENUM_COLUMNS, ExclusionParams, PipelineError, continuation,
                                 default_equality_mode, default_step, energy_sweep, enumerate_k,
                                 interpolate_solution, linear_solve, monotonicity_report, refine_grid,
                                 refine_point, sdpr_method, stability_bracket, stability_sweep,
                                 write_enumeration_csv, write_sweep_csv)
from cavitysdp.sdpsolve import SDPOptions


def test_default_schedules():
    assert default_equality_mode(1) == "localizing"
    assert default_equality_mode(2) == "full"
    assert default_step(999.0) == 10.0 and default_step(1000.0) == 500.0


def test_sdpr_without_refinement_is_exact_at_zero():
    sol = sdpr_method(0.0, 1.0, 5, refine="none")
    lin = linear_solve(1.0, 5)
    assert sol.provenance == "sdpr(1)"
    assert sol.energy == pytest.approx(lin.energy, rel=1e-5)
    assert sol.residual <= 1e-8
    assert sol.info["sdp_status"] == "optimal"


def test_sdpr_provenance_records_refinement():
    sol = sdpr_method(100.0, 1.0, 5, refine="newton")
    assert sol.provenance.startswith("sdpr(1)+newton")
    assert sol.converged and sol.residual <= 1e-10
    with pytest.raises(ValueError):
        sdpr_method(100.0, 1.0, 5, w=3)


def test_sdpr_reports_sdp_failure():
    # an exclusion no point of the box can satisfy
    from cavitysdp.polysys import Poly
    impossible = [Poly.const(-1.0, 18)]
    with pytest.raises(PipelineError) as err:
        sdpr_method(100.0, 1.0, 5, exclusions=impossible)
    assert err.value.partial["sdp_status"] == "infeasible"


def test_refine_point_routes(pop0):
    x0 = np.full(18, 0.01)
    for method in ("newton", "sqp", "sqp+newton"):
        x, ok, steps, _ = refine_point(pop0, x0, method)
        assert ok and scaled_residual(pop0.system, x) <= 1e-8
        assert steps
    with pytest.raises(ValueError):
        refine_point(pop0, x0, "magic")


def test_enumeration_small_run_and_csv():
    run = enumerate_k(1000.0, 1.0, 5, 1, 2, ExclusionParams(1e-3, 0.0, 3, 0))
    assert len(run.solutions) >= 1
    assert run.rows[0].k == 0 and run.rows[0].accepted
    buf = io.StringIO()
    write_enumeration_csv(run, buf)
    header, *lines = buf.getvalue().splitlines()
    assert tuple(header.split(",")) == ENUM_COLUMNS
    assert len(lines) == len(run.rows)
    with pytest.raises(ValueError):
        enumerate_k(1000.0, 1.0, 5, 1, 0)


def test_continuation_path_structure():
    path = continuation(100.0, 1.0, 5, dR=25.0)
    assert path.status == "complete"
    assert path.R_values == [0.0, 25.0, 50.0, 75.0, 100.0]
    assert all(s.residual <= 1e-10 for _, s in path.entries)
    assert path.final.energy == pytest.approx(3.046e-3, rel=1e-3)
    with pytest.raises(ValueError):
        continuation(-1.0, 1.0, 5)


def test_continuation_is_step_independent_on_smooth_branch():
    a = continuation(200.0, 1.0, 5, dR=10.0).final
    b = continuation(200.0, 1.0, 5, dR=50.0).final
    assert np.max(np.abs(a.point - b.point)) < 1e-8


def test_continuation_breakdown_is_reported():
    # one newton iteration cannot bridge a large step; no halving allowed
    from cavitysdp.localopt import NewtonOptions
    path = continuation(5000.0, 1.0, 7, dR=5000.0, max_halvings=0, lm_fallback=False,
                        opts=NewtonOptions(max_iters=1))
    assert path.status == "breakdown" and path.terminated_at == 0.0


def test_interpolation_identity_and_refinement():
    sol = continuation(100.0, 1.0, 6, dR=50.0).final
    assert np.array_equal(interpolate_solution(sol, 6), sol.point)
    fine = refine_grid(sol, 11)
    assert fine.converged and fine.N == 11 and fine.provenance == "refined"
    direct = continuation(100.0, 1.0, 11, dR=50.0).final
    assert np.max(np.abs(fine.point - direct.point)) < 1e-8
    with pytest.raises(ValueError):
        refine_grid(sol, 5)


def test_monotonicity_report():
    rep = monotonicity_report([1, 2, 3], [3.0, 2.0, 2.5])
    assert not rep["monotone_nonincreasing"]
    assert rep["increases"][0]["R_from"] == 2
    assert monotonicity_report([1, 2], [2.0, 2.0])["monotone_nonincreasing"]


def test_energy_sweep_small():
    table = energy_sweep([0.0, 100.0, 200.0], 1.0, 5, ["continuation", "sdpr1"])
    assert table.column("E_C")[1] == pytest.approx(3.046e-3, rel=1e-3)
    assert table.report["monotone_nonincreasing"]
    buf = io.StringIO()
    write_sweep_csv(table, buf)
    assert buf.getvalue().splitlines()[0].startswith("R,N")


def test_stability_sweep_detects_no_transition_at_low_R():
    table = stability_sweep([0.0, 50.0], 1.0, 6)
    assert stability_bracket(table) is None
