"""The command-line interface: exit codes, configuration and outputs."""

from __future__ import annotations

import csv
import json
import shutil
import subprocess
import sys

import pytest

from pseudoherm_lab.cli import main
from pseudoherm_lab.experiments import EXPERIMENTS


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_list(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[0] for ln in lines] == list(EXPERIMENTS)
    assert len(lines) == 10


def test_passing_run_writes_report_and_csv(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--experiment", "axioms", "--model", "heisenberg:1", "--out", str(out)]) == 0
    rep = _report(out)
    assert rep["pass"] is True
    assert rep["config"]["model"] == "heisenberg:1"
    assert set(rep["artifacts"]) == {"axioms.csv", "report.json"}
    rows = list(csv.reader(open(out / "axioms.csv")))
    assert len(rows) > 1
    assert "PASS" in capsys.readouterr().out


def test_failing_check_exits_one(tmp_path):
    out = tmp_path / "o"
    code = main(["run", "--experiment", "jacobi-dims", "--model", "heisenberg:1", "--out", str(out), "--tmax", "1"])
    assert code == 1
    failed = [c["name"] for c in _report(out)["checks"] if not c["pass"]]
    assert failed == ["dim_horizontal_fields"]


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--experiment", "nope", "--model", "heisenberg:1"],
        ["run", "--experiment", "fefferman", "--model", "sphere:1"],
        ["run", "--experiment", "axioms", "--model", "heisenberg:1", "--h", "-1"],
        ["run", "--model", "heisenberg:1"],
        ["run", "--experiment", "axioms", "--model", "heisenberg:1", "--kappa", "0.2"],
        ["run", "--experiment", "axioms", "--model", "torus:1"],
    ],
)
def test_usage_errors_exit_two(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path / "o")]) == 2


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--h", "abc"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "axioms", "model": "heisenberg:2", "seed": 3, "samples": 5}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == 0
    conf = _report(out)["config"]
    assert conf["seed"] == 4 and conf["samples"] == 5 and conf["model"] == "heisenberg:2"


@pytest.mark.parametrize(
    "content", ['{"experiment": "axioms", "model": "heisenberg:1", "bogus": 1}', '{"experiment": {"a": 1}}', "[1, 2]", "{"]
)
def test_bad_config_is_usage_error(tmp_path, content):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_seed_type_checked(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "axioms", "model": "heisenberg:1", "seed": 1.5}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_outputs_are_deterministic(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["run", "--experiment", "identities", "--model", "scaled-heisenberg:1", "--out", str(out)]) == 0
    reps = [_report(o) for o in outs]
    for r in reps:
        r.pop("wall_time")
        r["config"].pop("out")
    assert reps[0] == reps[1]
    assert (outs[0] / "identities.csv").read_text() == (outs[1] / "identities.csv").read_text()


def test_console_script(tmp_path):
    exe = shutil.which("pseudoherm-lab")
    cmd = [exe] if exe else [sys.executable, "-m", "pseudoherm_lab.cli"]
    done = subprocess.run(cmd + ["list"], capture_output=True, text=True)
    assert done.returncode == 0 and "axioms" in done.stdout
    done = subprocess.run(cmd + ["run"], capture_output=True, text=True)
    assert done.returncode == 2
