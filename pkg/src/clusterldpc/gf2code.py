"""Parity-check matrices over GF(2): alist I/O, systematic encoding, syndromes."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import TextIO

import numpy as np


class AlistError(ValueError):
    """Malformed alist input. ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RankError(ValueError):
    """Parity-check matrix is not full row rank."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"parity-check row {row} is linearly dependent on earlier rows")


@dataclass(frozen=True)
class ParityCheckMatrix:
    """Sparse binary parity-check matrix stored as per-row column supports."""

    n_cols: int
    row_support: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(sorted(set(int(c) for c in r))) for r in self.row_support)
        for i, r in enumerate(rows):
            if not r:
                raise ValueError(f"row {i} has no nonzero entries")
            if r[0] < 0 or r[-1] >= self.n_cols:
                raise ValueError(f"row {i} has a column index outside [0, {self.n_cols})")
        object.__setattr__(self, "row_support", rows)

    @property
    def n_rows(self) -> int:
        return len(self.row_support)

    @cached_property
    def col_support(self) -> tuple[tuple[int, ...], ...]:
        cols: list[list[int]] = [[] for _ in range(self.n_cols)]
        for i, r in enumerate(self.row_support):
            for c in r:
                cols[c].append(i)
        return tuple(tuple(c) for c in cols)

    @cached_property
    def dense(self) -> np.ndarray:
        h = np.zeros((self.n_rows, self.n_cols), dtype=np.uint8)
        for i, r in enumerate(self.row_support):
            h[i, list(r)] = 1
        h.setflags(write=False)
        return h

    @classmethod
    def from_dense(cls, h) -> "ParityCheckMatrix":
        h = np.asarray(h)
        if h.ndim != 2:
            raise ValueError("expected a 2-D matrix")
        return cls(h.shape[1], tuple(tuple(np.flatnonzero(row)) for row in h))

    def syndrome(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape[-1] != self.n_cols:
            raise ValueError(f"expected {self.n_cols} bits, got {bits.shape[-1]}")
        return (bits @ self.dense.T.astype(np.int64)) & 1


def syndrome_ok(h: ParityCheckMatrix, bits) -> bool:
    """True iff every parity check over ``bits`` is even."""
    return not np.any(h.syndrome(bits))


# --------------------------------------------------------------------- alist


def load_alist(stream: TextIO | str) -> ParityCheckMatrix:
    """Parse a MacKay-style alist (1-based indices, zero padding allowed).

    Column lists and row lists are cross-checked against each other.
    """
    text = stream if isinstance(stream, str) else stream.read()
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(no, toks) for no, toks in lines if toks]
    pos = 0

    def take(expected: int | None = None) -> tuple[int, list[int]]:
        nonlocal pos
        if pos >= len(lines):
            raise AlistError("unexpected end of file", lines[-1][0] if lines else 1)
        no, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistError(f"non-integer token in {toks!r}", no) from None
        if expected is not None and len(vals) != expected:
            raise AlistError(f"expected {expected} values, got {len(vals)}", no)
        return no, vals

    no, (n, m) = take(2)
    if n <= 0 or m <= 0:
        raise AlistError("matrix dimensions must be positive", no)
    no, (max_col_deg, max_row_deg) = take(2)
    no, col_deg = take(n)
    if any(d < 0 or d > max_col_deg for d in col_deg):
        raise AlistError("column degree outside [0, max column degree]", no)
    no, row_deg = take(m)
    if any(d < 1 or d > max_row_deg for d in row_deg):
        raise AlistError("row degree outside [1, max row degree]", no)

    cols: list[list[int]] = []
    for j in range(n):
        no, vals = take()
        idx = [v for v in vals if v != 0]
        if len(idx) != col_deg[j]:
            raise AlistError(f"column {j}: expected {col_deg[j]} indices, got {len(idx)}", no)
        if any(v < 1 or v > m for v in idx):
            raise AlistError(f"column {j}: row index out of range 1..{m}", no)
        cols.append(sorted(v - 1 for v in idx))
    rows: list[list[int]] = []
    row_lines: list[int] = []
    for i in range(m):
        no, vals = take()
        idx = [v for v in vals if v != 0]
        if len(idx) != row_deg[i]:
            raise AlistError(f"row {i}: expected {row_deg[i]} indices, got {len(idx)}", no)
        if any(v < 1 or v > n for v in idx):
            raise AlistError(f"row {i}: column index out of range 1..{n}", no)
        rows.append(sorted(v - 1 for v in idx))
        row_lines.append(no)

    from_cols: list[list[int]] = [[] for _ in range(m)]
    for j, rs in enumerate(cols):
        for r in rs:
            from_cols[r].append(j)
    for i in range(m):
        if sorted(from_cols[i]) != rows[i]:
            raise AlistError(f"row {i} disagrees with the column lists", row_lines[i])
    return ParityCheckMatrix(n, tuple(tuple(r) for r in rows))


def save_alist(h: ParityCheckMatrix) -> str:
    """Canonical alist text: single spaces, trailing newline, no zero padding
    except a lone ``0`` for an all-zero column."""
    cols = h.col_support
    out = io.StringIO()
    out.write(f"{h.n_cols} {h.n_rows}\n")
    out.write(f"{max(len(c) for c in cols)} {max(len(r) for r in h.row_support)}\n")
    out.write(" ".join(str(len(c)) for c in cols) + "\n")
    out.write(" ".join(str(len(r)) for r in h.row_support) + "\n")
    for c in cols:
        out.write((" ".join(str(i + 1) for i in c) or "0") + "\n")
    for r in h.row_support:
        out.write(" ".join(str(j + 1) for j in r) + "\n")
    return out.getvalue()


# ------------------------------------------------------------------ encoding


@dataclass(frozen=True)
class EncoderMap:
    """Systematic encoder for a full-rank H.

    ``info_positions`` are the channel positions carrying message bits (in
    message order); ``parity_positions[i]`` is solved from ``parity_matrix[i]``.
    ``permutation`` lists channel positions as message bits followed by parity bits.
    """

    n: int
    info_positions: np.ndarray
    parity_positions: np.ndarray
    parity_matrix: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return len(self.info_positions)

    @property
    def permutation(self) -> np.ndarray:
        return np.concatenate([self.info_positions, self.parity_positions])

    def encode(self, message) -> np.ndarray:
        """Encode one message (shape (K,)) or a batch (shape (B, K))."""
        msg = np.asarray(message, dtype=np.uint8)
        if msg.shape[-1] != self.k:
            raise ValueError(f"expected {self.k} message bits, got {msg.shape[-1]}")
        out = np.zeros(msg.shape[:-1] + (self.n,), dtype=np.uint8)
        out[..., self.info_positions] = msg
        out[..., self.parity_positions] = (msg.astype(np.int64) @ self.parity_matrix.T) & 1
        return out

    def extract(self, codeword) -> np.ndarray:
        return np.asarray(codeword)[..., self.info_positions]


def systematic_encoder(h: ParityCheckMatrix) -> EncoderMap:
    """Build a systematic encoder by GF(2) elimination with column pivoting.

    Pivot columns are searched from the right, so a code whose parity part
    sits in the trailing columns keeps its message bits in the leading ones.
    """
    m, n = h.n_rows, h.n_cols
    # rows packed as Python ints; bit j <-> column j
    packed = [sum(1 << c for c in r) for r in h.row_support]
    basis: list[int] = []
    pivots: list[int] = []
    for i, row in enumerate(packed):
        for b, p in zip(basis, pivots):
            if row >> p & 1:
                row ^= b
        if row == 0:
            raise RankError(i)
        p = row.bit_length() - 1
        # keep earlier basis rows reduced on the new pivot
        basis = [b ^ row if b >> p & 1 else b for b in basis]
        basis.append(row)
        pivots.append(p)
    pivot_set = set(pivots)
    info = np.array([c for c in range(n) if c not in pivot_set], dtype=np.int64)
    order = np.argsort(pivots)
    parity_pos = np.array(pivots, dtype=np.int64)[order]
    pm = np.zeros((m, len(info)), dtype=np.uint8)
    for r, idx in enumerate(order):
        b = basis[idx]
        pm[r] = [(b >> int(c)) & 1 for c in info]
    return EncoderMap(n, info, parity_pos, pm)


# ------------------------------------------------------------------ builtins

#: The irregular (16,8) example code; message bits b0..b7, parity b8..b15.
EXAMPLE_16_8 = ParityCheckMatrix.from_dense(
    [
        [0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 1, 0, 0, 0, 0, 0],
        [1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0],
        [1, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0],
        [1, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0],
        [0, 0, 1, 0, 0, 1, 1, 0, 1, 0, 0, 0, 0, 0, 1, 0],
        [0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1],
    ]
)

BUILTIN_CODES = {
    "16_8": None,
    "nr220": "nr220.alist",
}
_ALIASES = {"(16,8)": "16_8", "16,8": "16_8", "(220,110)": "nr220"}


def builtin_code(name: str) -> ParityCheckMatrix:
    """Return a named built-in code: ``"16_8"`` or ``"nr220"``."""
    key = _ALIASES.get(name, name)
    if key not in BUILTIN_CODES:
        raise KeyError(f"unknown built-in code {name!r}; choose from {sorted(BUILTIN_CODES)}")
    fname = BUILTIN_CODES[key]
    if fname is None:
        return EXAMPLE_16_8
    text = resources.files("clusterldpc.codes").joinpath(fname).read_text()
    return load_alist(text)


def load_code(source: str) -> ParityCheckMatrix:
    """Built-in code name or path to an alist file."""
    key = _ALIASES.get(source, source)
    if key in BUILTIN_CODES:
        return builtin_code(key)
    with open(source) as fh:
        return load_alist(fh)


def random_messages(rng: np.random.Generator, k: int, count: int | None = None) -> np.ndarray:
    shape = (k,) if count is None else (count, k)
    return rng.integers(0, 2, size=shape, dtype=np.uint8)

