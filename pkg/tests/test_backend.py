"""Backend selection flag and the benchmark entry point."""

from __future__ import annotations

import json
import os
import subprocess
import sys

from pseudoherm_lab.benchmark import main, run_benchmark

SNIPPET = (
    "import numpy as np\n"
    "from pseudoherm_lab import kernels\n"
    "from pseudoherm_lab.connection import identity_suite\n"
    "from pseudoherm_lab.models import scaled_heisenberg\n"
    "m = scaled_heisenberg(1, 0.3)\n"
    "rep = identity_suite(m, m.sample_points(4), trials=2)\n"
    "print(kernels.BACKEND, rep.passed)\n"
)


def _run_with(flag: str | None) -> str:
    env = dict(os.environ)
    env.pop("PSEUDOHERM_LAB_NO_NUMBA", None)
    if flag is not None:
        env["PSEUDOHERM_LAB_NO_NUMBA"] = flag
    done = subprocess.run([sys.executable, "-c", SNIPPET], capture_output=True, text=True, env=env, check=True)
    return done.stdout.strip()


def test_flag_selects_numpy_backend():
    assert _run_with("1") == "numpy True"
    from pseudoherm_lab import kernels

    expected = "numba" if kernels._HAVE_NUMBA else "numpy"
    assert _run_with("0") == f"{expected} True"


def test_benchmark_rows(capsys):
    rows = run_benchmark(size=20, repeat=1)
    assert [r["kernel"] for r in rows] == ["tw_from_structure", "curvature", "propagate_linear", "hermite"]
    for r in rows:
        assert r.get("max_difference", 0.0) < 1e-10
    assert main(["--size", "10", "--repeat", "1", "--json"]) == 0
    assert len(json.loads(capsys.readouterr().out)) == 4
