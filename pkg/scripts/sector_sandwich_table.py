"""Tabulate lower bound, empirical sector constant and upper bound for random two-atom Thorin measures."""
from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from cbci import Atomic, ThorinPair
from cbci.sector import sector_report


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.cases):
        w = rng.uniform(0.1, 10.0, 2)
        x = np.sort(rng.uniform(0.1, 10.0, 2))
        rep = sector_report(ThorinPair(0.0, Atomic(tuple(w), tuple(x))))
        rows.append({"case": i, "w1": w[0], "w2": w[1], "x1": x[0], "x2": x[1],
                     "lower": rep.lower, "empirical": rep.empirical, "upper": rep.upper,
                     "ok": not rep.violations()})

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    bad = sum(not r["ok"] for r in rows)
    print(f"# {len(rows) - bad}/{len(rows)} cases satisfy lower <= empirical <= upper", file=sys.stderr)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
