"""Timing comparison of the numba and numpy kernel backends.

Run ``python -m pseudoherm_lab.benchmark`` to print one line per kernel with
the best-of-``repeat`` time of each backend and the largest difference
between their outputs.
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from . import kernels
from .connection import connection_batch, structure_constants
from .models import sphere


def _inputs(size: int, seed: int = 0) -> dict:
    """Representative arguments for every kernel, built from a sphere model."""
    rng = np.random.default_rng(seed)
    model = sphere(2)
    pts = model.sample_points(size, seed=seed)
    structure = structure_constants(model, pts)
    data = connection_batch(model, pts)
    m = model.frame_size
    dim = 2 * m
    steps = np.full(size, 1e-3)
    t_nodes = np.concatenate([[0.0], np.cumsum(steps)])
    return {
        "tw_from_structure": (structure, model.j_frame),
        "curvature": (data["tw"], rng.normal(size=(size, m, m, m, m)), structure),
        "propagate_linear": (
            rng.normal(size=(size + 1, dim, dim)),
            rng.normal(size=(size, dim, dim)),
            steps,
            np.eye(dim),
        ),
        "hermite": (
            t_nodes,
            rng.normal(size=(size + 1, m)),
            rng.normal(size=(size + 1, m)),
            np.sort(rng.uniform(0.0, t_nodes[-1], size=4 * size)),
        ),
    }


def _max_gap(a, b) -> float:
    if isinstance(a, tuple):
        return max(_max_gap(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def run_benchmark(size: int = 2000, repeat: int = 5) -> list:
    """Time each kernel on both backends; numba is compiled before timing."""
    args = _inputs(size)
    backends = ["numpy"] + (["numba"] if kernels._HAVE_NUMBA else [])
    rows = []
    for name, call_args in args.items():
        outputs, times = {}, {}
        for backend in backends:
            func = kernels.implementation(name, backend)
            outputs[backend] = func(*call_args)  # warm-up and compilation
            times[backend] = min(timeit.repeat(lambda: func(*call_args), number=1, repeat=repeat))
        row = {"kernel": name, "size": size}
        row.update({f"{b}_seconds": t for b, t in times.items()})
        if "numba" in times:
            row["speedup"] = times["numpy"] / times["numba"]
            row["max_difference"] = _max_gap(outputs["numpy"], outputs["numba"])
        rows.append(row)
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Compare the numba and numpy kernel backends.")
    parser.add_argument("--size", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = parser.parse_args(argv)
    rows = run_benchmark(args.size, args.repeat)
    if args.json:
        print(json.dumps(rows, indent=2, sort_keys=True))
        return 0
    for r in rows:
        line = f"{r['kernel']:<18} numpy {r['numpy_seconds'] * 1e3:9.3f} ms"
        if "numba_seconds" in r:
            line += f"  numba {r['numba_seconds'] * 1e3:9.3f} ms  speedup {r['speedup']:7.2f}x"
            line += f"  max diff {r['max_difference']:.1e}"
        print(line)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
