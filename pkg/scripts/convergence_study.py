"""Relaxation of the Cauchy problem toward the stationary correlations.

Sweeps kappa and the time step, fits the exponential decay rate of
||k^(n)(t) - k_c^(n)|| for n = 1 (from zero data) and n = 2 (from the
stationary k1 with zero pair correlation) and compares with n (1 - kappa).
"""

import argparse
import csv
import sys

from quasicontact.dispersal import GaussianKernel
from quasicontact.hierarchy import (
    Model,
    TorusGrid,
    constant_initial,
    evolve_cauchy,
    solve_stationary,
    zero_initial,
)
from quasicontact.markspace import MutationKernel


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--kappas", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9])
    parser.add_argument("--dts", type=float, nargs="+", default=[1e-2, 3e-3, 1e-3])
    parser.add_argument("--box", type=float, default=32.0)
    parser.add_argument("--n-points", type=int, default=64)
    parser.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    args = parser.parse_args()

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["kappa", "dt", "rate1", "reference1", "rate2", "reference2"])
    for kappa in args.kappas:
        model = Model.build(kappa, MutationKernel.point(), [0.5], GaussianKernel([[1.0]]),
                            TorusGrid(1, args.box, args.n_points))
        stat, _ = solve_stationary(model, 2)
        gap = 1 - kappa
        for dt in args.dts:
            t1 = 20 / gap
            traj = evolve_cauchy(model, zero_initial(model, 1), t1, dt=dt, stationary=stat[:1])
            rate1 = traj.decay_rate(1, t1 / 4, t1)
            t2 = 6 / gap
            k0 = [stat[0], constant_initial(model, 2, 0.0)[1]]
            traj = evolve_cauchy(model, k0, t2, dt=dt, stationary=stat)
            rate2 = traj.decay_rate(2, t2 / 4, t2)
            w.writerow([kappa, dt, f"{rate1:.6f}", gap, f"{rate2:.6f}", 2 * gap])
            fh.flush()
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
