import itertools

import numpy as np
import pytest
from hypothesis import settings

from clusterldpc.gf2code import EXAMPLE_16_8, systematic_encoder

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def h16():
    return EXAMPLE_16_8


@pytest.fixture(scope="session")
def enc16(h16):
    return systematic_encoder(h16)


def all_codewords(h):
    """Brute-force codebook: every N-bit word with zero syndrome (small N only)."""
    dense = h.dense.astype(np.int64)
    words = np.array(list(itertools.product((0, 1), repeat=h.n_cols)), dtype=np.int64)
    ok = ((words @ dense.T) % 2 == 0).all(axis=1)
    return words[ok].astype(np.uint8)


def exact_bit_posteriors(codewords, x, precision):
    """P(b_n = 1 | x) under a uniform prior on codewords and AWGN of the given precision."""
    s = 2.0 * codewords - 1.0
    ll = -0.5 * precision * ((x[None, :] - s) ** 2).sum(axis=1)
    w = np.exp(ll - ll.max())
    w /= w.sum()
    return w @ codewords
