import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavitysdp.cavity import GridMap, Solution
from cavitysdp.cli import (ConfigError, dumps_solution, field_csv, field_svg, load_config,
                           load_solution, main, save_solution, solution_from_dict)
from cavitysdp.pipelines import continuation


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("CAVITYSDP_OUTPUT_DIR", str(tmp_path))
    return tmp_path


def _sol(N=5, R=100.0):
    return continuation(R, 1.0, N, dR=50.0).final


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 8), st.integers(0, 2**31 - 1))
def test_solution_round_trip_bit_exact(N, seed):
    rng = np.random.default_rng(seed)
    n = GridMap(N).dimension
    # extreme magnitudes and subnormals survive the text form
    x = rng.normal(size=n) * 10.0 ** rng.integers(-300, 300, size=n)
    sol = Solution(x, float(rng.random()), 1e-320, "test", R=float(rng.random() * 1e4), N=N,
                   info={"a": [1, 2.5], "b": float("inf")})
    text = dumps_solution(sol)
    back = solution_from_dict(json.loads(text))
    assert back.point.tobytes() == x.tobytes()
    assert back.energy == sol.energy and back.residual == sol.residual and back.R == sol.R
    assert dumps_solution(back) == text


def test_save_load_save_identical_bytes(tmp_path):
    sol = _sol()
    p1 = save_solution(sol, tmp_path / "a.json")
    p2 = save_solution(load_solution(p1), tmp_path / "b.json")
    assert p1.read_bytes() == p2.read_bytes()
    d = json.loads(p1.read_text())
    psi, om = np.array(d["psi_grid"]), np.array(d["omega_grid"])
    h = 0.25
    # wall vorticity written exactly as the substitution formulas give it
    assert np.array_equal(om[-1, 1:-1], -(2 * psi[-2, 1:-1] + 2 * 1.0 * h) / h**2)
    assert np.array_equal(om[1:-1, 0], -2 * psi[1:-1, 1] / h**2)


def test_malformed_solution_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ValueError):
        load_solution(p)
    d = json.loads(dumps_solution(_sol()))
    d["schema_version"] = 99
    with pytest.raises(ValueError):
        solution_from_dict(d)
    d["schema_version"] = 1
    d["point"] = d["point"][:-1]
    with pytest.raises(ValueError):
        solution_from_dict(d)


def test_field_export_scales_with_M():
    sol = _sol()
    rows1 = [r.split(",") for r in field_csv(sol, 1.0).splitlines()[1:]]
    rows3 = [r.split(",") for r in field_csv(sol, 3.0).splitlines()[1:]]
    assert len(rows1) == 9
    for a, b in zip(rows1, rows3):
        assert a[:2] == b[:2]
        assert float(b[2]) == 3.0 * float(a[2]) and float(b[3]) == 3.0 * float(a[3])
    zero = Solution(np.zeros(18), 0.0, 0.0, "zero")
    assert all(float(r.split(",")[2]) == 0.0 for r in field_csv(zero).splitlines()[1:])
    svg = field_svg(sol)
    assert svg.startswith("<svg") and svg.count("<line") >= 9


def test_config_validation(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"R": 10.0, "N": 6}))
    assert load_config(str(cfg), {"N": 7}).N == 7
    cfg.write_text(json.dumps({"R": 10.0, "bogus": 1}))
    with pytest.raises(ConfigError):
        load_config(str(cfg), {})
    for bad in ({"N": 3}, {"R": -1.0}, {"w": 3}, {"scheme": "upwind"}, {"iterations": [{"eps3": 1}]}):
        with pytest.raises(ConfigError):
            load_config(None, bad)


def test_cli_exit_codes(out, tmp_path, capsys):
    assert main(["solve", "--method", "linear", "-N", "5"]) == 0
    assert "F=9.6" in capsys.readouterr().out
    assert main(["solve", "--method", "linear", "-R", "10"]) == 1
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert main(["solve", "--config", str(cfg)]) == 1
    assert main(["refine", "-N", "5"]) == 1
    assert main(["nonsense"]) == 1


def test_cli_numerical_failure_writes_record(out):
    code = main(["solve", "--method", "sdpr", "-R", "100", "-N", "5", "--b1", "1",
                 "--config", _write_cfg(out, {"bounds": {"psi": 1e-9, "omega": 1e-9}})])
    assert code == 2
    rec = json.loads((out / "solve-failure.json").read_text())
    assert rec["command"] == "solve" and rec["error"]


def _write_cfg(d, data):
    p = d / "cfg.json"
    p.write_text(json.dumps(data))
    return str(p)


def test_cli_pipeline_commands(out, capsys):
    assert main(["continue", "-R", "100", "-N", "5", "--dR", "50", "-o", "c.json"]) == 0
    assert (out / "c.json").exists() and (out / "continuation_R100_N5.csv").exists()
    assert main(["refine", "--input", str(out / "c.json"), "--N-f", "9", "-o", "f.json"]) == 0
    assert load_solution(out / "f.json").N == 9
    assert main(["stability", "--input", str(out / "c.json"), "-o", "s.json"]) == 0
    assert load_solution(out / "s.json").stability["n_positive"] == 0
    assert main(["export-field", "--input", str(out / "c.json"), "--format", "svg"]) == 0
    assert (out / "c_field.svg").exists()
    assert main(["export-sdp", "-R", "100", "-N", "5"]) == 0
    assert (out / "sdpr1_R100_N5.sdp").read_text().startswith("# cavitysdp sparse SDP v1")
    assert main(["sweep", "--R-list", "0,100", "-N", "5", "--methods", "continuation"]) == 0
    assert "nonincreasing" in capsys.readouterr().out
    assert main(["enumerate", "-R", "1000", "-N", "5", "-k", "2", "--eps1", "1e-3", "--b1", "3"]) == 0
    assert (out / "enumeration_R1000_N5.csv").exists()
