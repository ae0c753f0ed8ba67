"""Experiment drivers: stationary BER sweep, non-stationary tracking, model mismatch.

Every mode of a comparison decodes the *same* received packets: packet
``i`` is generated from ``(seed, i)`` alone, so only the decoder differs.
Bit errors are counted on the message bits.

Confidence intervals are normal approximations, ``1.96 * sd / sqrt(P)``
over the per-packet error rates (sample sd, zero for a single packet).
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .channel import NoiseTrace, make_packet
from .clustergraph import compile_code
from .decoder import Decoder, DecoderConfig
from .expfam import GammaBelief
from .gf2code import load_code, systematic_encoder
from .tracker import TrackerState, advance, precision_to_snr_db, snr_db_to_precision

MODES = ("estimate", "perfect", "fixed", "fixed-offset")
CI_METHOD = "normal approximation: 1.96 * sample sd of per-packet error rate / sqrt(packets)"


@dataclass
class ExperimentConfig:
    code: str = "nr220"
    snr_start: float = 0.0
    snr_stop: float = 4.45
    snr_points: int = 6
    packets: int = 1000
    max_iter: int = 20
    S: int | None = 10
    prior_precision: float = 1.0
    prior_nu: float = 2.0
    seed: int = 1
    modes: tuple[str, ...] = ("estimate", "perfect")
    # fixed mode: None means "last posterior mean of an S=inf estimate pass"
    fixed_precision: float | None = None
    offset_db: float = -0.1
    Eb: float = 1.0
    calibration_tol: float = 1e-6
    deactivation_threshold: float = 1e-7
    deactivation: bool = True
    smoothing_a: float = 0.005
    window: int = 10000
    # mismatch: model SNR grid relative to the actual SNR
    actual_precision: float = 1.32
    model_offset_start: float = -1.5
    model_offset_stop: float = 2.5
    model_points: int = 9

    def __post_init__(self):
        if isinstance(self.modes, str):
            self.modes = tuple(m.strip() for m in self.modes.split(",") if m.strip())
        self.modes = tuple(self.modes)
        if self.snr_points < 1 or self.model_points < 1:
            raise ValueError("points must be >= 1")
        if self.packets < 1:
            raise ValueError("packets must be >= 1")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ValueError(f"unknown modes {bad}; choose from {MODES}")
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("modes must be distinct")
        if self.S is not None and self.S < 1:
            raise ValueError("S must be >= 1 or None")

    def decoder_config(self, fixed_precision: float | None = None) -> DecoderConfig:
        return DecoderConfig(self.max_iter, self.calibration_tol, self.deactivation_threshold,
                             self.deactivation, fixed_precision)

    def prior(self) -> GammaBelief:
        return GammaBelief.from_mean(self.prior_precision, self.prior_nu)

    def snr_grid(self) -> np.ndarray:
        if self.snr_points == 1:
            return np.array([self.snr_start])
        return np.linspace(self.snr_start, self.snr_stop, self.snr_points)

    @classmethod
    def field_types(cls) -> dict[str, str]:
        return {f.name: str(f.type) for f in fields(cls)}


class PacketRecord(NamedTuple):
    packet: int
    mode: str
    true_precision: float
    est_mean: float
    est_sd: float
    errors: int
    converged: bool
    iters: int


# -------------------------------------------------------------- statistics


def smoothed_ber(errors_per_packet: Sequence[float], K: int, a: float = 0.005, window: int = 10000) -> np.ndarray:
    """Centered moving mean of ``(a + e_p) / (K + a)``; windows are truncated at the ends.

    The window around packet ``i`` covers ``[i - window // 2, i - window // 2 + window)``.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if window < 1:
        raise ValueError("window must be >= 1")
    e = np.asarray(errors_per_packet, dtype=np.float64)
    n = e.size
    if n == 0:
        return e.copy()
    # integer error counts make the prefix sums exact; one division per window
    lo, hi = _window_bounds(n, window)
    prefix = np.concatenate([[0.0], np.cumsum(e)])
    m = (hi - lo).astype(np.float64)
    return (a * m + (prefix[hi] - prefix[lo])) / (m * (K + a))


def _window_bounds(n: int, window: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n)
    lo = np.clip(idx - window // 2, 0, n)
    hi = np.clip(idx - window // 2 + window, 0, n)
    return lo, hi


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n == 0:
        return v.copy()
    lo, hi = _window_bounds(n, window)
    prefix = np.concatenate([[0.0], np.cumsum(v)])
    return (prefix[hi] - prefix[lo]) / (hi - lo)


def ber_summary(errors: Sequence[int], K: int) -> tuple[float, float]:
    """(mean BER, 95% CI half-width)."""
    r = np.asarray(errors, dtype=np.float64) / K
    if r.size < 2:
        return float(r.mean()), 0.0
    return float(r.mean()), float(1.96 * r.std(ddof=1) / math.sqrt(r.size))


# ----------------------------------------------------------------- runner


class Harness:
    """Code, encoder and decoder shared by all runs of one configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.h = load_code(cfg.code)
        self.enc = systematic_encoder(self.h)
        self.decoder = Decoder(compile_code(self.h))
        self.N = self.h.n_cols
        self.K = self.enc.k
        self.R = self.K / self.N

    def packet(self, index: int, precision: float):
        return make_packet(self.enc, self.cfg.seed, index, precision)

    def run_stream(self, mode: str, precisions: Sequence[float], fixed_precision: float | None = None,
                   S: int | None | str = "cfg") -> tuple[list[PacketRecord], TrackerState]:
        """Decode packets 0..P-1 in order under one mode, carrying the tracker where needed."""
        cfg = self.cfg
        S = cfg.S if S == "cfg" else S
        tracker = TrackerState.start(cfg.prior(), S, self.N)
        learn = mode in ("estimate", "fixed-offset")
        offset = cfg.offset_db if mode == "fixed-offset" else 0.0
        fixed_cfg = None
        if mode == "fixed":
            if fixed_precision is None:
                raise ValueError("fixed mode needs a precision")
            fixed_cfg = cfg.decoder_config(fixed_precision)
        learn_cfg = cfg.decoder_config()
        out = []
        for i, g in enumerate(precisions):
            pk = self.packet(i, g)
            if learn:
                res = self.decoder.decode(pk.signal, tracker.current_prior, learn_cfg)
                tracker = advance(tracker, res.posterior_gamma, g, offset)
                est, sd = res.posterior_gamma.mean, res.posterior_gamma.sd
            elif mode == "perfect":
                res = self.decoder.decode(pk.signal, tracker.current_prior, cfg.decoder_config(g))
                est, sd = g, 0.0
            else:
                res = self.decoder.decode(pk.signal, tracker.current_prior, fixed_cfg)
                est, sd = fixed_precision, 0.0
            errors = int(np.count_nonzero(self.enc.extract(res.bits) != self.enc.extract(pk.true_bits)))
            out.append(PacketRecord(i, mode, float(g), float(est), float(sd), errors, res.converged,
                                    res.iterations))
        return out, tracker

    def fixed_average_precision(self, precisions: Sequence[float]) -> float:
        """Last posterior mean of an estimate pass with no forgetting."""
        if self.cfg.fixed_precision is not None:
            return float(self.cfg.fixed_precision)
        _, tr = self.run_stream("estimate", precisions, S=None)
        return float(tr.history[-1].posterior_mean) if tr.history else self.cfg.prior_precision


class SweepRow(NamedTuple):
    snr_db: float
    mode: str
    ber: float
    ci95: float
    mean_iters: float
    packets: int


def run_ber_sweep(cfg: ExperimentConfig, harness: Harness | None = None) -> list[SweepRow]:
    hs = harness or Harness(cfg)
    rows = []
    for snr in cfg.snr_grid():
        g = snr_db_to_precision(float(snr), hs.R, cfg.Eb)
        prec = [g] * cfg.packets
        fixed = hs.fixed_average_precision(prec) if "fixed" in cfg.modes else None
        for mode in cfg.modes:
            recs, _ = hs.run_stream(mode, prec, fixed)
            ber, ci = ber_summary([r.errors for r in recs], hs.K)
            rows.append(SweepRow(float(snr), mode, ber, ci, float(np.mean([r.iters for r in recs])), len(recs)))
    return rows


@dataclass
class TrackingResult:
    records: list[PacketRecord]
    summary: dict[str, dict[str, float]]
    fixed_precision: float | None
    histories: dict[str, list] = field(default_factory=dict)


def run_tracking(cfg: ExperimentConfig, trace: NoiseTrace, harness: Harness | None = None) -> TrackingResult:
    if len(trace) < cfg.packets:
        raise ValueError(f"trace has {len(trace)} packets, run needs {cfg.packets}")
    hs = harness or Harness(cfg)
    prec = [float(g) for g in trace.precisions[:cfg.packets]]
    fixed = hs.fixed_average_precision(prec) if "fixed" in cfg.modes else None
    records, summary, hist = [], {}, {}
    for mode in cfg.modes:
        recs, tr = hs.run_stream(mode, prec, fixed)
        records.extend(recs)
        errs = [r.errors for r in recs]
        ber, ci = ber_summary(errs, hs.K)
        summary[mode] = {
            "ber": ber,
            "ci95": ci,
            "smoothed_ber": float(np.mean(smoothed_ber(errs, hs.K, cfg.smoothing_a, cfg.window))),
            "mean_iters": float(np.mean([r.iters for r in recs])),
        }
        if mode in ("estimate", "fixed-offset"):
            hist[mode] = tr.history_rows()
    return TrackingResult(records, summary, fixed, hist)


class MismatchRow(NamedTuple):
    model_snr_db: float
    ber: float
    ci95: float
    mean_iters: float


def mismatch_grid(cfg: ExperimentConfig, R: float) -> tuple[float, np.ndarray]:
    actual = precision_to_snr_db(cfg.actual_precision, R, cfg.Eb)
    if cfg.model_points == 1:
        return actual, np.array([actual + cfg.model_offset_start])
    return actual, actual + np.linspace(cfg.model_offset_start, cfg.model_offset_stop, cfg.model_points)


def run_mismatch(cfg: ExperimentConfig, harness: Harness | None = None) -> list[MismatchRow]:
    hs = harness or Harness(cfg)
    _, grid = mismatch_grid(cfg, hs.R)
    packets = [hs.packet(i, cfg.actual_precision) for i in range(cfg.packets)]
    rows = []
    for snr in grid:
        dcfg = cfg.decoder_config(snr_db_to_precision(float(snr), hs.R, cfg.Eb))
        errs, iters = [], []
        for pk in packets:
            res = hs.decoder.decode(pk.signal, cfg.prior(), dcfg)
            errs.append(int(np.count_nonzero(hs.enc.extract(res.bits) != hs.enc.extract(pk.true_bits))))
            iters.append(res.iterations)
        ber, ci = ber_summary(errs, hs.K)
        rows.append(MismatchRow(float(snr), ber, ci, float(np.mean(iters))))
    return rows


# --------------------------------------------------------------------- CSV


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(stream: IO[str], header: Iterable[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(list(header))
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def write_sweep_csv(stream: IO[str], rows: Iterable[SweepRow]) -> None:
    write_rows(stream, SweepRow._fields, rows)


def write_mismatch_csv(stream: IO[str], rows: Iterable[MismatchRow]) -> None:
    write_rows(stream, MismatchRow._fields, rows)


TRACK_COLUMNS = ("packet", "mode", "true_precision", "est_mean", "est_sd", "errors", "iters")


def write_track_csv(stream: IO[str], records: Iterable[PacketRecord]) -> None:
    write_rows(stream, TRACK_COLUMNS, ((r.packet, r.mode, r.true_precision, r.est_mean, r.est_sd, r.errors, r.iters)
                                       for r in records))


def write_track_summary(stream: IO[str], result: TrackingResult) -> None:
    rows = [(m, s["ber"], s["ci95"], s["smoothed_ber"], s["mean_iters"]) for m, s in result.summary.items()]
    write_rows(stream, ("mode", "ber", "ci95", "smoothed_ber", "mean_iters"), rows)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
