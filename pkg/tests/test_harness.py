import json
import subprocess
import sys

import pytest

from pqbound.cli import main
from pqbound.errors import ConfigError, UncoveredProblemError
from pqbound.harness import RunReport, clean, resolve_problem, run_certify, run_checks, run_solve
from pqbound.scenarios import scenario_config, write_configs


def test_clean_handles_numpy_and_infinities():
    import numpy as np

    out = clean({"a": np.float64(1.5), "b": float("inf"), "c": [np.int64(2), np.bool_(True)], "d": np.arange(2)})
    assert out == {"a": 1.5, "b": "inf", "c": [2, True], "d": [0, 1]}
    json.dumps(out, allow_nan=False)


def test_resolve_problem_overrides(tmp_path):
    pb = resolve_problem("double_phase_basic", seed=9, samples=100, grid=(5, 7))
    assert (pb.seed, pb.n_samples, pb.grid) == (9, 100, (5, 7))
    with pytest.raises(ConfigError):
        resolve_problem("no_such_scenario")
    with pytest.raises(ConfigError):
        resolve_problem("double_phase_basic", grid=(1, 5))


def test_run_checks_verdicts():
    rep = run_checks("double_phase_basic", samples=3000)
    assert rep.passed and rep.classification["label"] == "theorem1"
    bad = run_checks("exp_control", samples=3000)
    assert not bad.verdicts["hypotheses_hold"] and bad.verdicts["expected_classification"]


def test_run_solve_records_order_and_boundary():
    rep = run_solve("poisson_manufactured")
    assert rep.verdicts["order_in_range"] and rep.verdicts["boundary_preserved"]
    assert rep.solve["coarse_grid"] == [15, 15]
    rep = run_solve("nonsymmetric_linear_plus_q")
    assert rep.verdicts["max_principle"]


def test_run_certify_refuses_uncovered():
    with pytest.raises(UncoveredProblemError) as ei:
        run_certify("exp_control", samples=2000)
    assert ei.value.stage == "check"


def test_report_verdicts_recomputable(tmp_path):
    rep = run_certify("double_phase_basic", out_dir=tmp_path)
    d = json.loads(rep.to_json())
    c = d["certificate"]
    assert d["verdicts"]["certificate_valid"] == (c["threshold_ok"] and c["observed_max"] <= c["d"] + c["tolerance"])
    assert d["verdicts"]["audit_bounded"] == (d["audit"]["max_required_c"] <= 1e3)
    t = c["trace"]
    L, zeta, delta = c["L"], c["zeta"], c["delta"]
    rec = all(t["J_h"][h + 1] <= L * zeta**h * t["J_h"][h] ** (1 + delta) * (1 + 1e-12)
              for h in range(len(t["h"]) - 1))
    assert d["verdicts"]["trace_recursion"] == rec
    for name in ("trace_double_phase_basic.csv", "solution_double_phase_basic.csv"):
        assert (tmp_path / name).is_file()


def test_report_csv_format():
    rep = RunReport(scenario="s", command="check", verdicts={"x": True}, classification={"label": "theorem1"})
    text = rep.to_csv()
    assert text.splitlines()[0] == "key,value"
    assert "verdicts.x,True" in text


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["check", "--config", "double_phase_basic", "--samples", "2000", "--out-dir", out]) == 0
    assert main(["check", "--config", "exp_control", "--samples", "2000", "--out-dir", out]) == 1
    assert main(["certify", "--config", "exp_control", "--samples", "2000", "--out-dir", out]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x",')
    assert main(["check", "--config", str(bad), "--out-dir", out]) == 2
    assert main(["solve", "--config", "double_phase_basic", "--grid", "1", "4", "--out-dir", out]) == 2
    assert main(["check", "--out-dir", out]) == 2
    cfg = scenario_config("double_phase_basic")
    cfg["solver"] = {"method": "newton", "max_iters": 1}
    stiff = tmp_path / "stiff.json"
    stiff.write_text(json.dumps(cfg))
    assert main(["solve", "--config", str(stiff), "--out-dir", out]) == 3
    err = capsys.readouterr().err
    assert "[solve]" in err and "ConvergenceError" in err


def test_cli_report_subcommand(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["report", "--config", "linear_spd", "--out-dir", out]) == 2
    assert main(["solve", "--config", "linear_spd", "--out-dir", out]) == 0
    assert main(["report", "--config", "linear_spd", "--out-dir", out, "--format", "csv"]) == 0
    assert (tmp_path / "report_linear_spd.csv").is_file()
    assert "solve linear_spd: PASS" in capsys.readouterr().out


def test_written_configs_load_through_cli(tmp_path):
    write_configs(tmp_path)
    path = tmp_path / "linear_spd.json"
    assert main(["check", "--config", str(path), "--samples", "2000", "--out-dir", str(tmp_path)]) == 0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "pqbound", "list"], capture_output=True, text=True, check=True)
    assert "double_phase_eps" in r.stdout.split()
