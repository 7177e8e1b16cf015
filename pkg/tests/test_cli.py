import json

import numpy as np
import pytest

from ucpredict.cli import main
from ucpredict.grid import save_grid, save_scenario
from ucpredict.toy import small_grid, small_scenario


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(5)
    grid = small_grid(rng)
    save_grid(grid, root / "grid.json")
    save_scenario(small_scenario(rng, grid), root / "base.json")
    cases = root / "cases"
    cases.mkdir()
    for k in range(2):
        save_scenario(small_scenario(np.random.default_rng(50 + k), grid), cases / f"c{k}.json")
    code = main(["generate", "--grid", str(root / "grid.json"), "--base", str(root / "base.json"),
                 "--delta", "0.05", "--max-samples", "6", "--schema", "levels", "--load-sigma", "0.1",
                 "--out", str(root / "samples.jsonl")])
    assert code == 0
    code = main(["train", "--samples", str(root / "samples.jsonl"), "--no-cv", "--lambda", "0.01",
                 "--workers", "1", "--out", str(root / "bundle.json")])
    assert code == 0
    return root


def _last_json(text):
    return json.loads(text.strip().splitlines()[-1])


def test_generate_and_train_outputs(workspace, capsys):
    assert (workspace / "samples.jsonl").exists()
    bundle = json.loads((workspace / "bundle.json").read_text())
    assert len(bundle["models"]) == 6 and bundle["grid"] is not None


def test_predict(workspace, capsys):
    code = main(["predict", "--bundle", str(workspace / "bundle.json"), "--scenario", str(workspace / "cases/c0.json")])
    out = _last_json(capsys.readouterr().out)
    assert code == 0
    assert out["decision"] in ("UseDirectly", "WarmStart", "RecoveredWarmStart")
    assert len(out["strategy"]) == 6


def test_solve_cold_and_warm(workspace, capsys, tmp_path):
    args = ["solve", "--grid", str(workspace / "grid.json"), "--scenario", str(workspace / "cases/c1.json")]
    assert main(args + ["--trace", str(tmp_path / "t.jsonl")]) == 0
    cold = _last_json(capsys.readouterr().out)
    assert main(args + ["--bundle", str(workspace / "bundle.json")]) == 0
    warm = _last_json(capsys.readouterr().out)
    assert cold["status"] == "Optimal"
    assert warm["cost"] == pytest.approx(cold["cost"], rel=1e-6)
    assert (tmp_path / "t.jsonl").read_text()


def test_evaluate_writes_report(workspace, capsys, tmp_path):
    out = tmp_path / "report.csv"
    code = main(["evaluate", "--bundle", str(workspace / "bundle.json"), "--cases", str(workspace / "cases"),
                 "--workers", "1", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "case_id,baseline,cost,wall_time_s,nodes,gap,status,triage_decision,knn_distance"
    assert len(lines) == 1 + 2 * 3
    assert json.loads((tmp_path / "report.csv.json").read_text())["aggregates"]


def test_missing_file_is_machine_readable(capsys):
    code = main(["solve", "--grid", "/nonexistent/grid.json", "--scenario", "/nonexistent/s.json"])
    err = json.loads(capsys.readouterr().err.strip())
    assert code == 1 and err["error"] == "file_not_found"


def test_usage_error(capsys):
    code = main(["train"])
    err = json.loads(capsys.readouterr().err.strip())
    assert code == 2 and err["error"] == "usage"


def test_invalid_value(workspace, capsys):
    code = main(["generate", "--grid", str(workspace / "grid.json"), "--base", str(workspace / "base.json"),
                 "--delta", "0", "--out", str(workspace / "x.jsonl")])
    err = json.loads(capsys.readouterr().err.strip())
    assert code == 1 and err["error"] == "invalid"
