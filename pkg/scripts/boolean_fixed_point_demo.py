"""Check that the forward map sends the Boolean fixed-point measure back to itself.

For several (a, b) the fixed point is a scaled free Poisson law; its forward image should
reproduce a, b and the same density.
"""
from __future__ import annotations

import argparse

import numpy as np

from cbci.boolean import fixed_point_measure, fixed_point_residual
from cbci.correspondence import forward


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=200)
    args = ap.parse_args(argv)

    print(f"{'a':>5} {'b':>5} {'|a err|':>10} {'|b err|':>10} {'density err':>12} {'G residual':>11}")
    for a, b in [(1.0, 0.0), (1.0, 1.0), (0.5, 2.0), (2.0, 0.5)]:
        pair = fixed_point_measure(0.0, a, b)
        lo, hi = pair.m.support()
        u = np.linspace(lo, hi, args.points + 2)[1:-1]
        res = forward(pair)
        dens = float(np.max(np.abs(res.M.density(u) - pair.m.density(u))))
        print(f"{a:5.2f} {b:5.2f} {abs(res.a - a):10.2e} {abs(res.b - b):10.2e} {dens:12.2e} "
              f"{fixed_point_residual(0.0, a, b):11.2e}")


if __name__ == "__main__":
    main()
