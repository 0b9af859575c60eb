"""Thin the cascade data, then compare direct inference with inference on
collocated and re-simulated clouds."""

import argparse
import csv

from pdl.experiments import CascadeBenchmark, resim_rescue


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--keep", type=float, nargs="+", default=[0.15, 0.3, 0.5, 1.0])
    ap.add_argument("--dt-new", type=float, default=0.5)
    ap.add_argument("--out", default="resim_rescue.csv")
    args = ap.parse_args()

    b = CascadeBenchmark()
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["keep", "seed", "clouds_kept", "rr_direct", "rr_resim"])
        for keep in args.keep:
            for seed in range(args.seeds):
                direct, rescued, thin, _ = resim_rescue(b, seed, keep, args.dt_new)
                w.writerow([keep, seed, thin.n_times, direct, rescued])
                fh.flush()
                print(keep, seed, round(direct, 3), round(rescued, 3))


if __name__ == "__main__":
    main()
