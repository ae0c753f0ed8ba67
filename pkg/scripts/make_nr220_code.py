"""Generate the bundled (220, 110) quasi-cyclic LDPC code.

The protograph is the top-left 10 x 20 block of the 5G NR base graph 2
layout (10 systematic columns, 4 core parity columns with the
double-diagonal structure, 6 single-diagonal extension columns), lifted
with Z = 11. Circulant shifts of the systematic part are drawn at random
and chosen to minimise 4-cycles; they are NOT the 3GPP shift table.

    python scripts/make_nr220_code.py [--seed 7] [--out src/clusterldpc/codes/nr220.alist]
"""

import argparse
import itertools
from pathlib import Path

import numpy as np

from clusterldpc.gf2code import ParityCheckMatrix, save_alist, systematic_encoder

Z = 11
PROTO_ROWS = [
    [0, 1, 2, 3, 6, 9, 10, 11],
    [0, 3, 4, 5, 6, 7, 8, 9, 11, 12],
    [0, 1, 3, 4, 8, 10, 12, 13],
    [1, 2, 4, 5, 6, 7, 8, 9, 10, 13],
    [0, 1, 11, 14],
    [0, 1, 5, 7, 11, 15],
    [0, 5, 7, 9, 11, 16],
    [1, 5, 7, 11, 13, 17],
    [0, 1, 12, 18],
    [1, 8, 10, 11, 19],
]
# core parity: column 10 carries shifts (1, 0, 1) on rows 0, 2, 3; the rest
# of the parity part is identity, which makes the parity block invertible.
FIXED = {(0, 10): 1, (2, 10): 0, (3, 10): 1}


def fixed_shift(r, c):
    if (r, c) in FIXED:
        return FIXED[(r, c)]
    if c >= 11:
        return 0
    return None


def count_4cycles(shifts):
    n = 0
    for r1, r2 in itertools.combinations(range(len(PROTO_ROWS)), 2):
        common = sorted(set(PROTO_ROWS[r1]) & set(PROTO_ROWS[r2]))
        for c1, c2 in itertools.combinations(common, 2):
            d = shifts[r1, c1] - shifts[r1, c2] + shifts[r2, c2] - shifts[r2, c1]
            if d % Z == 0:
                n += 1
    return n


def draw(rng):
    shifts = np.zeros((10, 20), dtype=int)
    for r, cols in enumerate(PROTO_ROWS):
        for c in cols:
            f = fixed_shift(r, c)
            shifts[r, c] = rng.integers(Z) if f is None else f
    return shifts


def lift(shifts):
    rows = []
    for r, cols in enumerate(PROTO_ROWS):
        for z in range(Z):
            rows.append(tuple(c * Z + (z + shifts[r, c]) % Z for c in cols))
    return ParityCheckMatrix(20 * Z, tuple(rows))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--tries", type=int, default=20000)
    ap.add_argument("--out", default=str(Path(__file__).parents[1] / "src/clusterldpc/codes/nr220.alist"))
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    best, best_n = None, None
    for _ in range(args.tries):
        s = draw(rng)
        n = count_4cycles(s)
        if best_n is None or n < best_n:
            best, best_n = s, n
            if n == 0:
                break
    h = lift(best)
    enc = systematic_encoder(h)  # raises if rank deficient
    print(f"4-cycles in protograph lift: {best_n}; N={h.n_cols} M={h.n_rows} K={enc.k}")
    Path(args.out).write_text(save_alist(h))
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
