"""Compare simulated CIR terminal values with the exact stationary Laplace transform 1/(1+lam)^delta."""
from __future__ import annotations

import argparse

import numpy as np

from cbci import Quadruplet
from cbci.simulate import empirical_laplace, simulate_path, z_scores


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--horizon", type=float, default=20.0)
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--delta", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    quad = Quadruplet(1.0, 1.0, delta=args.delta)
    lams = np.linspace(0.2, 3.0, 8)
    ens = simulate_path(quad, None, 1.0, args.horizon, args.dt, seed=args.seed, paths=args.paths)
    emp, err = empirical_laplace(ens, lams)
    exact = (1.0 + lams) ** -args.delta
    z = z_scores(emp, err, exact)
    print(f"{'lam':>6} {'empirical':>12} {'exact':>12} {'z':>8}")
    for row in zip(lams, emp, exact, z):
        print("{:6.2f} {:12.6f} {:12.6f} {:8.3f}".format(*row))
    print(f"max |z| = {np.max(np.abs(z)):.3f}")


if __name__ == "__main__":
    main()
