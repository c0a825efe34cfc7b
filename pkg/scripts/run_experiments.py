"""Run every config in scripts/configs through the CLI and print one line per run.

    python3 scripts/run_experiments.py [--only NAME ...] [--workers K] [--out DIR]
"""

import argparse
import json
import sys
from pathlib import Path

from zerostat.cli import main as cli_main

HERE = Path(__file__).resolve().parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run (default: all)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results", help="parent directory for the per-run outputs")
    args = ap.parse_args(argv)

    configs = sorted((HERE / "configs").glob("*.yaml"))
    if args.only:
        configs = [c for c in configs if c.stem in args.only]
    worst = 0
    for cfg in configs:
        out = Path(args.out) / cfg.stem
        code = cli_main(["run", str(cfg), "--out", str(out), "--workers", str(args.workers)])
        verdict_file = out / "verdict.json"
        verdict = json.loads(verdict_file.read_text())["verdict"] if verdict_file.exists() else "n/a"
        print(f"{cfg.stem:20s} exit {code}  verdict {verdict}", file=sys.stderr)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
