"""BER of a fixed-precision decoder as its assumed SNR moves around the true one."""

import argparse
import sys

from clusterldpc.experiments import ExperimentConfig, run_mismatch, write_mismatch_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--packets", type=int, default=2000)
    ap.add_argument("--actual-precision", type=float, default=1.32)
    ap.add_argument("--points", type=int, default=9)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="-")
    a = ap.parse_args()
    cfg = ExperimentConfig(code="nr220", packets=a.packets, actual_precision=a.actual_precision,
                           model_points=a.points, seed=a.seed)
    out = sys.stdout if a.out == "-" else open(a.out, "w", newline="")
    write_mismatch_csv(out, run_mismatch(cfg))


if __name__ == "__main__":
    main()
