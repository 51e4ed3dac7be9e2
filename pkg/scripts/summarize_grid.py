"""Collapse a run_grid.py output directory into one plot-ready table.

One row per (condition, method, stratum): median and quartiles of per-feature
coverage and mean standardized length, the quantities behind the boxplot
matrices of coverage and interval length.
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("grid", type=Path)
    ap.add_argument("--out", type=Path, help="output CSV (default: stdout)")
    args = ap.parse_args()

    strata = {(int(r["generator"]), int(r["feature"])): r["stratum"] for r in read_csv(args.grid / "strata.csv")}
    groups = defaultdict(lambda: {"coverage": [], "length": []})
    for cov_path in sorted(args.grid.glob("*/coverage.csv")):
        cell = cov_path.parent.name
        g = int(cell.split("_")[0][1:])
        for row in read_csv(cov_path):
            key = (cell, row["method"], strata[(g, int(row["feature"]))])
            groups[key]["coverage"].append(float(row["coverage"]))
            if row["mean_std_length"]:
                groups[key]["length"].append(float(row["mean_std_length"]))

    fh = args.out.open("w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["condition", "method", "stratum", "features",
                "cov_q25", "cov_median", "cov_q75", "len_median"])
    for (cell, method, stratum), v in sorted(groups.items()):
        q = np.percentile(v["coverage"], [25, 50, 75])
        length = np.median(v["length"]) if v["length"] else float("nan")
        w.writerow([cell, method, stratum, len(v["coverage"]), *(f"{x:.4f}" for x in q), f"{length:.4f}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
