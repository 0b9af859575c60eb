"""Downstream trajectory fit of the cascade with x1 prescribed versus inferred."""

import argparse
import csv

from pdl.experiments import CascadeBenchmark, forced_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--out", default="forced_driver.csv")
    args = ap.parse_args()

    b = CascadeBenchmark()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "l2_downstream_full", "l2_downstream_forced", "l2_forced_variable"])
        for seed in range(args.seeds):
            row = [seed, *forced_comparison(b, seed)]
            w.writerow(row)
            print(*row)


if __name__ == "__main__":
    main()
