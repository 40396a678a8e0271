import json
import subprocess
import sys

import numpy as np

from edgesim import scenarios
from edgesim.cli import main
from edgesim.factorial import Factor, FactorialDesign, write_responses


def config(tmp_path, **changes):
    cfg = scenarios.limitations("Baseline", "Est", duration=5.0).to_dict()
    cfg.update(changes)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", config(tmp_path), "--out", str(out)]) == 0
    for name in ("transactions.csv", "resources.csv", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 1 and summary["ok"] > 0
    assert "p90=" in capsys.readouterr().out


def test_unknown_policy_exits_2_naming_field(tmp_path, capsys):
    path = config(tmp_path, policy={"kind": "Random"})
    assert main(["run", path, "--out", str(tmp_path / "o")]) == 2
    assert "policy.kind" in capsys.readouterr().err


def test_missing_file_is_config_error(tmp_path):
    assert main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_seed_gives_identical_outputs(tmp_path):
    path = config(tmp_path)
    for d in ("a", "b"):
        assert main(["run", path, "--seed", "42", "--out", str(tmp_path / d)]) == 0
    for name in ("transactions.csv", "resources.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_overrides(tmp_path):
    out = tmp_path / "o"
    assert main(["run", config(tmp_path), "--policy", "RPI", "--duration", "3",
                 "--out", str(out)]) == 0
    cfg = json.loads((out / "summary.json").read_text())["config"]
    assert cfg["policy"]["kind"] == "RPI" and cfg["duration"] == 3.0


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EDGESIM_OUT", str(tmp_path / "env"))
    assert main(["run", config(tmp_path)]) == 0
    assert (tmp_path / "env" / "summary.json").exists()


def test_factorial_from_csv(tmp_path, capsys):
    d = FactorialDesign([Factor("A", "lo", "hi")], 2)
    (tmp_path / "design.json").write_text(json.dumps(d.to_dict()))
    write_responses(d, np.array([[4.0, 6.0], [8.0, 10.0]]), str(tmp_path / "r.csv"))
    out = tmp_path / "fo"
    assert main(["factorial", str(tmp_path / "design.json"), str(tmp_path / "r.csv"),
                 "--out", str(out)]) == 0
    assert json.loads((out / "effects.json").read_text())["q"] == {"I": 7.0, "A": 2.0}
    assert "A" in capsys.readouterr().out
    assert main(["factorial", str(tmp_path / "r.csv"), "--out", str(out)]) == 2


def test_factorial_unknown_simulated_factor(tmp_path):
    d = FactorialDesign([Factor("zzz", 0, 1)], 1)
    (tmp_path / "design.json").write_text(json.dumps(d.to_dict()))
    assert main(["factorial", str(tmp_path / "design.json"), "--out", str(tmp_path)]) == 2


def test_suite_policy_filter(tmp_path, capsys):
    assert main(["suite", "clique", "--policy", "Bogus", "--out", str(tmp_path)]) == 2
    assert main(["suite", "clique", "--policy", "Legacy", "--reps", "2", "--duration", "5",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "clique-table.csv").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "edgesim", "run", config(tmp_path),
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
