"""Cascade relative error versus measurement interval and versus M1.

Both sweeps reuse one simulated dataset per (dt, seed), so the M1 columns
compare fits on identical data.
"""

import argparse
import csv

from pdl.experiments import CascadeBenchmark, run_cascade, simulate_cascade


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--dt", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8, 1.0])
    ap.add_argument("--m1", type=int, nargs="+", default=[15, 20, 25, 30, 40])
    ap.add_argument("--out", default="cascade_sweeps.csv")
    args = ap.parse_args()

    b = CascadeBenchmark()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dt", "m1", "seed", "relative_error", "precision", "recall"])
        for dt in args.dt:
            for seed in range(args.seeds):
                data, _ = simulate_cascade(b, seed, dt=dt)
                for m1 in args.m1:
                    _, rep = run_cascade(b, seed, data=data, m1=m1)
                    w.writerow([dt, m1, seed, rep.relative_error, rep.precision, rep.recall])
                    fh.flush()
                    print(dt, m1, seed, round(rep.relative_error, 4))


if __name__ == "__main__":
    main()
