"""Estimated vs perfect-knowledge BER on the N=220 code at fixed SNR points."""

import argparse
import sys
import time

from clusterldpc.experiments import ExperimentConfig, run_ber_sweep, write_sweep_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--packets", type=int, default=2000)
    ap.add_argument("--snr", type=float, nargs="+", default=[0.0, 2.225, 4.45])
    ap.add_argument("--modes", default="estimate,perfect")
    ap.add_argument("--S", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="-")
    a = ap.parse_args()
    t0 = time.time()
    rows = []
    for snr in a.snr:
        cfg = ExperimentConfig(code="nr220", snr_start=snr, snr_points=1, packets=a.packets, S=a.S,
                               seed=a.seed, modes=a.modes)
        rows += run_ber_sweep(cfg)
        print(f"[{time.time() - t0:7.1f}s] {snr} dB done", file=sys.stderr)
    out = sys.stdout if a.out == "-" else open(a.out, "w", newline="")
    write_sweep_csv(out, rows)


if __name__ == "__main__":
    main()
