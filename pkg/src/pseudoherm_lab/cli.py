"""Command-line entry point: ``pseudoherm-lab run`` and ``pseudoherm-lab list``."""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import EXPERIMENTS, ExperimentConfig, UsageError, run

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

_TYPES = {"h": float, "tmax": float, "kappa": float, "tolerance": float, "seed": int, "samples": int}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with status 2 already; keep the message terse
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pseudoherm-lab", description="Numerical pseudohermitian geometry experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("list", help="list experiments")
    runp = sub.add_parser("run", help="run one experiment")
    runp.add_argument("--experiment")
    runp.add_argument("--model")
    runp.add_argument("--out")
    runp.add_argument("--config", help="flat JSON object with default settings")
    for name, kind in _TYPES.items():
        runp.add_argument(f"--{name}", type=kind)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the JSON file (if any) with command-line flags; flags win."""
    values: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(loaded, dict) or any(isinstance(v, (dict, list)) for v in loaded.values()):
            raise UsageError("config must be a flat JSON object")
        unknown = set(loaded) - set(ExperimentConfig.keys())
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for key in ExperimentConfig.keys():
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    for key in ("experiment", "model"):
        if not isinstance(values.get(key), str):
            raise UsageError(f"--{key} is required")
    for key, kind in _TYPES.items():
        if key in values and values[key] is not None:
            val = values[key]
            if isinstance(val, bool) or not isinstance(val, (int, float)) or (kind is int and val != int(val)):
                raise UsageError(f"{key} must be a{'n integer' if kind is int else ' number'}")
            values[key] = kind(val)
    return ExperimentConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        width = max(len(k) for k in EXPERIMENTS)
        for key, exp in EXPERIMENTS.items():
            print(f"{key:<{width}}  {exp.description}")
        return EXIT_PASS
    try:
        config = load_config(args)
        report = run(config)
    except UsageError as exc:
        print(f"pseudoherm-lab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status}  {check.name}  value={check.value!r}  {check.relation} {check.tolerance!r}")
    print(f"{report.id}: {'PASS' if report.passed else 'FAIL'} ({report.wall_time:.2f} s) -> {config.out}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
