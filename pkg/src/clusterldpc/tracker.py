"""Sequential precision learning across packets with a capped sample size."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, NamedTuple

from .expfam import GammaBelief


def precision_to_snr_db(e_gamma: float, R: float = 0.5, Eb: float = 1.0) -> float:
    """Rate-compensated SNR in dB of a noise precision."""
    if e_gamma <= 0 or Eb <= 0:
        raise ValueError("precision and Eb must be positive")
    if not 0 < R <= 1:
        raise ValueError("code rate must lie in (0, 1]")
    return 10.0 * math.log10(Eb * e_gamma / (2.0 * R))


def snr_db_to_precision(snr_db: float, R: float = 0.5, Eb: float = 1.0) -> float:
    if Eb <= 0:
        raise ValueError("Eb must be positive")
    if not 0 < R <= 1:
        raise ValueError("code rate must lie in (0, 1]")
    return 2.0 * R * 10.0 ** (snr_db / 10.0) / Eb


class HistoryRow(NamedTuple):
    packet_index: int
    true_precision: float | None
    posterior_mean: float
    posterior_sd: float


def cap_belief(posterior: GammaBelief, cap: float) -> GammaBelief:
    """Scale both natural parameters so that eta2 does not exceed ``cap``."""
    if posterior.eta2 <= cap:
        return posterior
    # ratio * cap keeps eta1/eta2 within one rounding of the original
    return GammaBelief(posterior.eta1 / posterior.eta2 * cap, cap)


@dataclass
class TrackerState:
    """Prior carried between packets.

    ``S`` is the stationarity window in packets (None means no forgetting),
    ``N`` the number of bits observed per packet.
    """

    current_prior: GammaBelief
    S: int | None
    N: int
    history: deque = field(default_factory=deque)
    packets: int = 0

    def __post_init__(self):
        if self.S is not None and (int(self.S) != self.S or self.S < 1):
            raise ValueError("S must be a positive integer or None")
        if self.N < 1:
            raise ValueError("N must be positive")

    @classmethod
    def start(cls, prior: GammaBelief, S: int | None, N: int, history_len: int | None = None) -> "TrackerState":
        return cls(prior, S, N, deque(maxlen=history_len))

    @property
    def cap(self) -> float:
        return math.inf if self.S is None else float(self.S * self.N)

    def history_rows(self) -> list[HistoryRow]:
        return list(self.history)


def advance(state: TrackerState, posterior: GammaBelief, true_precision: float | None = None,
            offset_db: float = 0.0) -> TrackerState:
    """Posterior of the packet just decoded becomes the next prior.

    ``offset_db`` (usually <= 0) shifts the next prior's mean by that many
    dB while keeping its shape, for the conservative-estimate variant.
    The returned state shares the history buffer of ``state``.
    """
    nxt = cap_belief(posterior, state.cap)
    if offset_db:
        nxt = GammaBelief(nxt.eta1 * 10.0 ** (-offset_db / 10.0), nxt.eta2)
    hist = state.history
    hist.append(HistoryRow(state.packets, true_precision, posterior.mean, posterior.sd))
    return replace(state, current_prior=nxt, history=hist, packets=state.packets + 1)


def run_filter(prior: GammaBelief, posteriors: Iterable[GammaBelief], S: int | None, N: int) -> TrackerState:
    """Feed a fixed sequence of posteriors through :func:`advance` (testing aid)."""
    st = TrackerState.start(prior, S, N)
    for p in posteriors:
        st = advance(st, p)
    return st


HISTORY_COLUMNS = ("packet_index", "true_precision", "posterior_mean", "posterior_sd", "snr_db")


def write_history_csv(rows: Iterable[HistoryRow], stream: IO[str], R: float = 0.5, Eb: float = 1.0) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for r in rows:
        tp = "" if r.true_precision is None else repr(float(r.true_precision))
        w.writerow([r.packet_index, tp, repr(float(r.posterior_mean)), repr(float(r.posterior_sd)),
                    repr(precision_to_snr_db(r.posterior_mean, R, Eb))])
