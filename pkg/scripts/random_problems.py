"""Tightness of the bounds on randomly drawn smooth diffusions.

For each problem on a finite interval the script computes the oracle
eigenvalue and the ratios kappa^-1 / lambda (between 1 and 4), the refined
upper ratio and the refined lower ratio, and summarizes their spread.

Usage: python3 scripts/random_problems.py [--n 20] [--seed 0] [--case DD] [--out ratios.csv]
"""
import argparse
import csv
import sys

import numpy as np

from spectralgap import DiffusionProblem, estimate_eigenvalue, kappa, kappa_bar, kappa_underline


def draw(rng) -> DiffusionProblem:
    left, right = rng.uniform(-1.0, 0.0), rng.uniform(1.0, 3.0)
    a0, a1, k, ph = rng.uniform(0.5, 2.0), rng.uniform(0.0, 0.8), rng.uniform(0.5, 3.0), rng.uniform(0, 3)
    b0, b1 = rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)
    return DiffusionProblem(left, right, 0.5 * (left + right), a=f"{a0:.4f} + {a1:.4f}*sin({k:.4f}*x + {ph:.4f})^2",
                            b=f"{b0:.4f} + {b1:.4f}*x")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--case", default="DD", choices=["DD", "NN"])
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.n):
        p = draw(rng)
        lam = estimate_eigenvalue(p, args.case).eigenvalue
        rows.append({"index": i, "a": p.a, "b": p.b, "lambda": lam,
                     "basic": kappa(p, args.case).inverse / lam,
                     "bar": kappa_bar(p, args.case).inverse / lam,
                     "underline": kappa_underline(p, args.case).inverse / lam})
        print(f"{i:3d}  lambda={lam:.6g}  basic={rows[-1]['basic']:.4f}  bar={rows[-1]['bar']:.4f}  "
              f"underline={rows[-1]['underline']:.4f}")

    for key in ("basic", "bar", "underline"):
        v = np.array([r[key] for r in rows])
        print(f"{key:>9} / lambda: min {v.min():.4f}  median {np.median(v):.4f}  max {v.max():.4f}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
