import json

import pytest

from gmnl.cli import main
from gmnl.io import dump, load
from gmnl.scenario import Behavior, Scenario


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def test_evaluate_chsh_uniform(tmp_path, capsys):
    expr = tmp_path / "chsh.json"
    beh = tmp_path / "u.json"
    assert run(capsys, "export", "--ineq", "chsh", "--out", str(expr))[0] == 0
    dump(Behavior.uniform(Scenario(2, 2, 2)), beh)
    code, out, _ = run(capsys, "evaluate", str(expr), str(beh))
    assert code == 0
    payload = json.loads(out)
    assert payload["value"] == pytest.approx(-0.5)
    assert payload["version"] and payload["run_digest"]


def test_evaluate_mismatch_exit_code(tmp_path, capsys):
    beh = tmp_path / "u3.json"
    dump(Behavior.uniform(Scenario(3, 2, 2)), beh)
    code, _, err = run(capsys, "evaluate", "--ineq", "chsh", str(beh))
    assert code == 2
    assert json.loads(err)["exit_code"] == 2


def test_thm2_behavior_pipeline(tmp_path, capsys):
    beh = tmp_path / "b.json"
    code, out, _ = run(capsys, "thm2", "--count", "20", "--seed", "7", "--behavior-out", str(beh))
    assert code == 0 and json.loads(out)["summary"] == "20/20 violations"
    code, out, _ = run(capsys, "evaluate", "--ineq", "improved00", "--n", "3", str(beh))
    assert code == 0 and json.loads(out)["margin"] > 0


def test_bound_and_refusal(capsys):
    code, out, _ = run(capsys, "bound", "--ineq", "improved00", "--n", "3", "--mode", "bilocal")
    payload = json.loads(out)
    assert code == 0 and payload["value"] == {"num": 0, "den": 1} and payload["certified"]
    code, out, _ = run(capsys, "bound", "--ineq", "chsh", "--mode", "local")
    assert json.loads(out)["float"] == 0.0
    code, _, err = run(capsys, "bound", "--ineq", "improved00", "--n", "8")
    assert code == 2 and "refused" in json.loads(err)["message"]


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "bogus")[0] == 2
    assert run(capsys, "evaluate", "--ineq", "nope", str(tmp_path / "missing.json"))[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "evaluate", "--ineq", "chsh", str(bad))
    assert code == 2 and json.loads(err)["error"] == "FormatError"


def test_identical_runs_identical_outputs(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "thm2", "--count", "5", "--seed", "1", "--out", str(a))
    run(capsys, "thm2", "--count", "5", "--seed", "1", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_depth_command(capsys):
    code, out, _ = run(capsys, "depth", "--n", "3", "--k", "2", "--restarts", "3")
    assert code == 0 and json.loads(out)["message"] == "depth >= 3"


def test_optimize_writes_files(tmp_path, capsys):
    beh, meas = tmp_path / "b.json", tmp_path / "m.json"
    code, out, _ = run(capsys, "optimize", "--ineq", "improved00", "--n", "3", "--tie",
                       "--restarts", "3", "--q", "0.05", "--behavior-out", str(beh),
                       "--measurements-out", str(meas))
    payload = json.loads(out)
    assert code == 0 and payload["value"] > 0
    assert isinstance(load(beh), Behavior)
    assert load(meas).effects.shape == (3, 2, 2, 2, 2)
