"""Command-line entry point: ``clusterldpc <subcommand> ...``.

Experiment options can also come from ``--config FILE`` (``key = value``
lines, ``#`` comments, keys named like the long flags). Precedence is
built-in default < config file < flag given on the command line.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .channel import STREAM_MESSAGE, load_trace_csv, packet_rng, synth_trace
from .clustergraph import (
    attach_bits,
    build_ltrip,
    clusters_from_matrix,
    layered_schedule,
    select_large_clusters,
    validate_rip,
)
from .experiments import (
    CI_METHOD,
    ExperimentConfig,
    Harness,
    run_ber_sweep,
    run_mismatch,
    run_tracking,
    write_mismatch_csv,
    write_sweep_csv,
    write_track_csv,
    write_track_summary,
)
from .gf2code import load_code, systematic_encoder
from .tracker import write_history_csv

log = logging.getLogger("clusterldpc")

_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
# field -> flag spelling
_FLAG = {name: "--" + name.replace("_", "-") for name in _FIELDS}
_FLAG["S"] = "--S"


def _parse_optional_int(text: str) -> int | None:
    t = text.strip().lower()
    if t in ("none", "inf", "infinity", ""):
        return None
    v = float(t)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _parse_optional_float(text: str) -> float | None:
    t = text.strip().lower()
    return None if t in ("none", "") else float(t)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_PARSERS = {
    "code": str,
    "modes": lambda s: tuple(m.strip() for m in s.split(",") if m.strip()),
    "S": _parse_optional_int,
    "fixed_precision": _parse_optional_float,
    "deactivation": _parse_bool,
}
for _name, _f in _FIELDS.items():
    if _name not in _PARSERS:
        _PARSERS[_name] = int if _f.type in ("int", int) else float


def read_config(path: str | Path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        name = key.lstrip("-").replace("-", "_")
        if name == "s":
            name = "S"
        if name not in _FIELDS:
            raise SystemExit(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[name] = _PARSERS[name](val)
        except ValueError as e:
            raise SystemExit(f"{path}:{lineno}: {e}") from None
    return out


def _add_experiment_flags(p: argparse.ArgumentParser, names: list[str]) -> None:
    for name in names:
        parse = _PARSERS[name]
        p.add_argument(_FLAG[name], dest=name, default=None,
                       type=(lambda s, f=parse: f(s)) if parse is not str else str,
                       help=f"(default {_FIELDS[name].default!r})")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base random seed")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--config", default=None, help="key = value file")


def _build_config(args, names: list[str], defaults: dict | None = None) -> ExperimentConfig:
    values = dict(defaults or {})
    values.update(read_config(args.config) if args.config else {})
    for name in names + ["seed"]:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    window_s = getattr(args, "window_seconds", None)
    if window_s is not None:
        values["S"] = max(1, int(round(window_s * 1000)))  # one packet per millisecond
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as e:
        raise SystemExit(f"invalid configuration: {e}") from None


@contextlib.contextmanager
def _open_out(path: str):
    if path == "-":
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            yield fh


def _write_meta(out: str, cfg: ExperimentConfig, extra: dict | None = None) -> None:
    if out == "-":
        return
    lines = [f"{k} = {getattr(cfg, k)!r}" for k in _FIELDS]
    lines.append(f"ci_method = {CI_METHOD}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v!r}")
    Path(out + ".meta").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- commands

_SWEEP_KEYS = ["code", "snr_start", "snr_stop", "snr_points", "packets", "max_iter", "S", "prior_precision",
               "prior_nu", "modes", "fixed_precision", "offset_db", "Eb", "calibration_tol",
               "deactivation_threshold", "deactivation"]
_TRACK_KEYS = ["code", "packets", "max_iter", "S", "prior_precision", "prior_nu", "modes", "fixed_precision",
               "offset_db", "Eb", "calibration_tol", "deactivation_threshold", "deactivation", "smoothing_a",
               "window"]
_MISMATCH_KEYS = ["code", "packets", "max_iter", "prior_precision", "actual_precision", "model_offset_start",
                  "model_offset_stop", "model_points", "Eb", "calibration_tol", "deactivation_threshold",
                  "deactivation"]


def cmd_build_graph(args) -> int:
    h = load_code(args.code)
    clusters = clusters_from_matrix(h)
    g = build_ltrip(clusters)
    policy = args.large_min_card
    large = select_large_clusters(clusters, policy)
    sched = layered_schedule(g, large)
    att = attach_bits(g, sched, h.n_cols)
    viol = validate_rip(g)
    with _open_out(args.out) as fh:
        fh.write(f"code {args.code} N={h.n_cols} M={h.n_rows}\n")
        fh.write(g.dump(sched, att))
        fh.write(f"rip violations {len(viol)}\n")
        for v in viol:
            fh.write(f"  {v}\n")
    return 1 if viol else 0


def cmd_encode(args) -> int:
    h = load_code(args.code)
    enc = systematic_encoder(h)
    if args.message:
        msgs = []
        for m in args.message:
            bits = [int(c) for c in m.strip() if c in "01"]
            if len(bits) != enc.k or len(bits) != len(m.strip()):
                raise SystemExit(f"message must be {enc.k} characters of 0/1: {m!r}")
            msgs.append(np.array(bits, dtype=np.uint8))
    else:
        seed = 1 if args.seed is None else args.seed
        msgs = [packet_rng(seed, i, STREAM_MESSAGE).integers(0, 2, enc.k, dtype=np.uint8)
                for i in range(args.count)]
    with _open_out(args.out) as fh:
        fh.write("message,codeword\n")
        for m in msgs:
            c = enc.encode(m)
            fh.write("".join(map(str, m)) + "," + "".join(map(str, c)) + "\n")
    return 0


def cmd_ber_sweep(args) -> int:
    cfg = _build_config(args, _SWEEP_KEYS)
    rows = run_ber_sweep(cfg)
    with _open_out(args.out) as fh:
        write_sweep_csv(fh, rows)
    _write_meta(args.out, cfg)
    return 0


def _trace_from_args(args, cfg: ExperimentConfig, R: float):
    if args.trace_csv:
        with open(args.trace_csv) as fh:
            return load_trace_csv(fh, R, cfg.Eb, upsample=args.upsample)
    params = {}
    for item in args.trace_param or []:
        k, _, v = item.partition("=")
        params[k.strip()] = float(v)
    length = args.trace_length or cfg.packets
    try:
        return synth_trace(args.trace, length, **params)
    except KeyError as e:
        raise SystemExit(f"trace {args.trace!r} needs parameter {e.args[0]!r}") from None


def cmd_track(args) -> int:
    cfg = _build_config(args, _TRACK_KEYS, {"modes": ("perfect", "fixed", "estimate")})
    hs = Harness(cfg)
    trace = _trace_from_args(args, cfg, hs.R)
    res = run_tracking(cfg, trace, hs)
    with _open_out(args.out) as fh:
        write_track_csv(fh, res.records)
    if args.summary_out:
        with _open_out(args.summary_out) as fh:
            write_track_summary(fh, res)
    if args.history_out:
        for mode, rows in res.histories.items():
            path = args.history_out if len(res.histories) == 1 else f"{args.history_out}.{mode}"
            with _open_out(path) as fh:
                write_history_csv(rows, fh, hs.R, cfg.Eb)
    _write_meta(args.out, cfg, {"fixed_precision_used": res.fixed_precision})
    return 0


def cmd_mismatch(args) -> int:
    cfg = _build_config(args, _MISMATCH_KEYS)
    rows = run_mismatch(cfg)
    with _open_out(args.out) as fh:
        write_mismatch_csv(fh, rows)
    _write_meta(args.out, cfg)
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clusterldpc", description="Cluster-graph LDPC decoding experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="print the cluster graph, schedule and bit attachment")
    _common(p)
    p.add_argument("--code", default="16_8", help="builtin name (16_8, nr220) or alist path")
    p.add_argument("--large-min-card", type=int, default=None,
                   help="clusters at least this large anchor the schedule (default: two largest sizes)")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("encode", help="systematically encode messages")
    _common(p)
    p.add_argument("--code", default="16_8")
    p.add_argument("--message", action="append", help="K-character 0/1 string; repeatable")
    p.add_argument("--count", type=int, default=1, help="random messages when --message is absent")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("ber-sweep", help="stationary BER against SNR for several decoder modes")
    _common(p)
    _add_experiment_flags(p, _SWEEP_KEYS)
    p.add_argument("--window-seconds", type=float, default=None, help="S given as seconds of 1 ms packets")
    p.set_defaults(func=cmd_ber_sweep)

    p = sub.add_parser("track", help="decode along a noise-precision trace")
    _common(p)
    _add_experiment_flags(p, _TRACK_KEYS)
    p.add_argument("--window-seconds", type=float, default=None, help="S given as seconds of 1 ms packets")
    p.add_argument("--trace", default="step", choices=["constant", "step", "ramp", "sinusoid"])
    p.add_argument("--trace-param", action="append", metavar="KEY=VALUE",
                   help="synthetic trace parameter, e.g. before=12 after=4 at=500")
    p.add_argument("--trace-length", type=int, default=None)
    p.add_argument("--trace-csv", default=None, help="CSV with an snr_db or precision column")
    p.add_argument("--upsample", type=int, default=None)
    p.add_argument("--summary-out", default=None)
    p.add_argument("--history-out", default=None)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("mismatch", help="BER when the decoder assumes the wrong SNR")
    _common(p)
    _add_experiment_flags(p, _MISMATCH_KEYS)
    p.set_defaults(func=cmd_mismatch)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return int(args.func(args) or 0)


if __name__ == "__main__":
    sys.exit(main())
