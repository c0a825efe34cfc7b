"""Exploratory: smallest rescaled gap between zeros of random degree-N sections.

For each N the script records, per trial, the smallest chordal-tangent distance
between two zeros and its sqrt(N)-rescaled value, then prints quantiles and a
fitted log-log slope of the median against N. It makes no claim about the
exponent; it only reports what the samples show.

    python3 scripts/min_root_gap.py --degrees 25 50 100 200 --trials 400 --csv gaps.csv
"""

import argparse
import csv
import math
import sys

import numpy as np

from zerostat.ensembles import EnsembleSpec
from zerostat.statistics import tan_distance, zero_points
from zerostat.trials import chunks, zero_sets


def min_gaps(N: int, trials: int, seed: int) -> np.ndarray:
    out = []
    for rng_range in chunks(trials, 200):
        for zs in zero_sets(EnsembleSpec(1, N), rng_range, seed):
            if isinstance(zs, Exception):
                continue
            H = zero_points(zs)
            D = tan_distance(H, H)
            np.fill_diagonal(D, np.inf)
            out.append(D.min())
    return np.array(out)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degrees", type=int, nargs="+", default=[25, 50, 100, 200])
    ap.add_argument("--trials", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default=None, help="write per-trial gaps here")
    args = ap.parse_args(argv)

    medians = []
    rows = []
    for N in args.degrees:
        g = min_gaps(N, args.trials, args.seed)
        q = np.quantile(g, [0.1, 0.5, 0.9])
        medians.append(q[1])
        rows += [(N, t, float(x), float(x) * math.sqrt(N)) for t, x in enumerate(g)]
        print(f"N={N:5d}  trials={g.size:5d}  min gap quantiles 10/50/90%: {q[0]:.3e} {q[1]:.3e} {q[2]:.3e}  "
              f"rescaled median {q[1] * math.sqrt(N):.3e}")
    if len(args.degrees) > 1:
        slope = np.polyfit(np.log(args.degrees), np.log(medians), 1)[0]
        print(f"log-log slope of the median gap against N: {slope:.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "trial", "min_gap", "rescaled_min_gap"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
