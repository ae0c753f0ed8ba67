"""Perfect / fixed-average / sequential-estimate decoding along synthetic precision traces."""

import argparse
import sys

from clusterldpc.channel import synth_trace
from clusterldpc.experiments import ExperimentConfig, run_tracking, write_track_csv, write_track_summary

TRACES = {
    "step": dict(kind="step", before=12.0, after=4.0),
    "sinusoid": dict(kind="sinusoid", mean=3.0, amplitude=1.5),
}


def make_trace(name: str, packets: int):
    p = dict(TRACES[name])
    kind = p.pop("kind")
    if kind == "step":
        p["at"] = packets // 2
    else:
        p["period"] = packets / 2
    return synth_trace(kind, packets, **p)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("trace", choices=sorted(TRACES))
    ap.add_argument("--packets", type=int, default=2000)
    ap.add_argument("--S", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="-")
    ap.add_argument("--summary-out", default="-")
    a = ap.parse_args()
    cfg = ExperimentConfig(code="nr220", packets=a.packets, S=a.S, seed=a.seed,
                           modes=("perfect", "fixed", "estimate"))
    res = run_tracking(cfg, make_trace(a.trace, a.packets))
    out = sys.stdout if a.out == "-" else open(a.out, "w", newline="")
    write_track_csv(out, res.records)
    summ = sys.stderr if a.summary_out == "-" else open(a.summary_out, "w", newline="")
    write_track_summary(summ, res)
    print(f"fixed precision used: {res.fixed_precision}", file=sys.stderr)


if __name__ == "__main__":
    main()
