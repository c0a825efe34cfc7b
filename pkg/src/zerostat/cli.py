"""Command line entry point: ``zerostat run | validate | list-experiments``."""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import EXIT_CONFIG, ConfigError, list_experiments, load_config, run, validate


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zerostat", description="Monte Carlo experiments on zeros of random sections.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="override output_dir")
    r.add_argument("--workers", type=int, default=1)
    v = sub.add_parser("validate", help="check a config against its schema")
    v.add_argument("config")
    sub.add_parser("list-experiments", help="print the experiment names")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-experiments":
        print("\n".join(list_experiments()))
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for msg in exc.violations:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        problems = validate(cfg)
        for msg in problems:
            print(f"config error: {msg}", file=sys.stderr)
        if not problems:
            print("ok")
        return EXIT_CONFIG if problems else 0
    if args.workers < 1:
        print("config error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    result = run(cfg, output_dir=args.out, workers=args.workers)
    for msg in result.violations:
        print(f"config error: {msg}", file=sys.stderr)
    if result.report is not None:
        print(json.dumps({"output_dir": str(result.output_dir), "verdict": result.verdict, "checks": result.report.checks}, indent=2))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
