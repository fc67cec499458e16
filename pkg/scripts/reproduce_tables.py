"""Recompute every reference value of the built-in examples and tabulate them.

Usage: python3 scripts/reproduce_tables.py [--out results.csv] [--only NAME ...]
"""
import argparse
import csv
import sys

from spectralgap import check_example
from spectralgap.examples import example_names


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="also write the table as CSV")
    ap.add_argument("--only", nargs="*", help="restrict to these examples")
    args = ap.parse_args(argv)

    rows = []
    for name in args.only or example_names():
        report = check_example(name)
        for c in report.checks:
            rows.append({"example": name, "case": c["case"], "quantity": c["quantity"], "computed": c["got"],
                         "reference": c["expected"], "tolerance": c["tolerance"], "verdict": c["verdict"]})

    fmt = "{:<18} {:<4} {:<16} {:>12} {:>10} {:>9}  {}"
    print(fmt.format("example", "case", "quantity", "computed", "reference", "tol", "verdict"))
    for r in rows:
        got = "-" if r["computed"] is None else f"{r['computed']:.6g}"
        print(fmt.format(r["example"], r["case"], r["quantity"], got, f"{r['reference']:.6g}",
                         f"{r['tolerance']:.2g}", r["verdict"]))
    n_fail = sum(r["verdict"] == "FAIL" for r in rows)
    print(f"\n{len(rows) - n_fail} of {len(rows)} reference values reproduced")

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 1 if n_fail else 0


if __name__ == "__main__":
    sys.exit(main())
