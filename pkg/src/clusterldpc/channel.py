"""BPSK / AWGN channel simulation and per-packet noise traces.

Randomness: every packet draws from its own Philox-4x64 stream keyed by
``(base_seed XOR packet_index, stream_id)``; Gaussian samples come from the
Box-Muller transform of that stream's uniform doubles. Packets are thus
reproducible individually and independent of the order they are generated in.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import IO, NamedTuple

import numpy as np

from .gf2code import EncoderMap
from .tracker import precision_to_snr_db, snr_db_to_precision

STREAM_NOISE = 0
STREAM_MESSAGE = 1
_MASK64 = (1 << 64) - 1


def packet_rng(base_seed: int, packet_index: int = 0, stream: int = STREAM_NOISE) -> np.random.Generator:
    key = np.array([(int(base_seed) ^ int(packet_index)) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def box_muller(gen: np.random.Generator, n: int) -> np.ndarray:
    """n standard normals from ceil(n/2) uniform pairs."""
    m = (n + 1) // 2
    u = gen.random(2 * m)
    r = np.sqrt(-2.0 * np.log1p(-u[:m]))  # 1 - u lies in (0, 1]
    th = 2.0 * np.pi * u[m:]
    return np.concatenate([r * np.cos(th), r * np.sin(th)])[:n]


def modulate_bpsk(bits) -> np.ndarray:
    b = np.asarray(bits)
    if b.size and not np.isin(b, (0, 1)).all():
        raise ValueError("bits must be 0/1")
    return 2.0 * b.astype(np.float64) - 1.0


def hard_decision(signal) -> np.ndarray:
    return (np.asarray(signal) > 0).astype(np.uint8)


def add_awgn(signal, precision: float, rng_seed: int | np.random.Generator, packet_index: int = 0) -> np.ndarray:
    """signal + N(0, 1/precision) noise."""
    if not precision > 0:
        raise ValueError("precision must be positive")
    x = np.asarray(signal, dtype=np.float64)
    gen = rng_seed if isinstance(rng_seed, np.random.Generator) else packet_rng(rng_seed, packet_index)
    return x + box_muller(gen, x.size).reshape(x.shape) / math.sqrt(precision)


# ------------------------------------------------------------------- traces


@dataclass(frozen=True)
class NoiseTrace:
    precisions: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        p = np.asarray(self.precisions, dtype=np.float64).ravel()
        if not np.all(p > 0):
            raise ValueError("trace precisions must be positive")
        object.__setattr__(self, "precisions", p)

    def __len__(self) -> int:
        return int(self.precisions.size)

    def __getitem__(self, i):
        return self.precisions[i]

    def snr_db(self, R: float = 0.5, Eb: float = 1.0) -> np.ndarray:
        return np.array([precision_to_snr_db(g, R, Eb) for g in self.precisions])

    def head(self, n: int) -> "NoiseTrace":
        if n > len(self):
            raise ValueError(f"trace has {len(self)} packets, {n} requested")
        return NoiseTrace(self.precisions[:n], self.source)


def synth_trace(kind: str, length: int, **params) -> NoiseTrace:
    """Synthetic precision traces.

    constant(value); step(before, after, at); ramp(start, stop);
    sinusoid(mean, amplitude, period, phase=0.0). ``phase`` is in radians.
    """
    if length < 1:
        raise ValueError("length must be positive")
    idx = np.arange(length, dtype=np.float64)
    if kind == "constant":
        p = np.full(length, float(params["value"]))
    elif kind == "step":
        at = int(params["at"])
        p = np.where(idx < at, float(params["before"]), float(params["after"]))
    elif kind == "ramp":
        a, b = float(params["start"]), float(params["stop"])
        p = a + (b - a) * idx / max(length - 1, 1)
    elif kind == "sinusoid":
        mean, amp, period = float(params["mean"]), float(params["amplitude"]), float(params["period"])
        if period <= 0:
            raise ValueError("period must be positive")
        p = mean + amp * np.sin(2.0 * np.pi * idx / period + float(params.get("phase", 0.0)))
    else:
        raise ValueError(f"unknown trace kind {kind!r}")
    if not np.all(p > 0):
        raise ValueError(f"{kind} trace parameters give non-positive precision")
    return NoiseTrace(p, "synthetic")


def resample(values: np.ndarray, length: int) -> np.ndarray:
    """Linear interpolation onto ``length`` evenly spaced packets; the last value is held."""
    v = np.asarray(values, dtype=np.float64)
    pos = np.arange(length) * (v.size / length)
    return np.interp(pos, np.arange(v.size), v)


def load_trace_csv(stream: IO[str] | str, R: float = 0.5, Eb: float = 1.0,
                   upsample: int | None = None, length: int | None = None) -> NoiseTrace:
    """Per-packet trace from a CSV with an ``snr_db`` or ``precision`` column.

    ``upsample`` multiplies the packet count; ``length`` sets it directly.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rd = csv.reader(stream)
    header = next(rd, None)
    if header is None:
        raise ValueError("empty trace file")
    cols = [h.strip() for h in header]
    if "precision" in cols:
        col, db = cols.index("precision"), False
    elif "snr_db" in cols:
        col, db = cols.index("snr_db"), True
    else:
        raise ValueError("trace CSV needs a 'snr_db' or 'precision' column")
    vals = []
    for line, row in enumerate(rd, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            v = float(row[col])
        except (ValueError, IndexError):
            raise ValueError(f"line {line}: non-numeric trace value {row!r}") from None
        vals.append(snr_db_to_precision(v, R, Eb) if db else v)
    if not vals:
        raise ValueError("trace file has no data rows")
    out = np.array(vals)
    if upsample is not None and length is not None:
        raise ValueError("give either upsample or length, not both")
    if upsample is not None:
        if upsample < 1:
            raise ValueError("upsample factor must be >= 1")
        out = resample(out, out.size * int(upsample))
    elif length is not None:
        out = resample(out, int(length))
    return NoiseTrace(out, "csv")


# ------------------------------------------------------------------ packets


class ReceivedPacket(NamedTuple):
    signal: np.ndarray
    true_bits: np.ndarray
    true_precision: float


def make_packet(enc: EncoderMap, base_seed: int, packet_index: int, precision: float) -> ReceivedPacket:
    """Random message, encoded, modulated and corrupted; fully determined by the arguments."""
    msg = packet_rng(base_seed, packet_index, STREAM_MESSAGE).integers(0, 2, enc.k, dtype=np.uint8)
    cw = enc.encode(msg)
    x = add_awgn(modulate_bpsk(cw), precision, packet_rng(base_seed, packet_index, STREAM_NOISE))
    return ReceivedPacket(x, cw, float(precision))
