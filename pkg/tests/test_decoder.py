import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clusterldpc.channel import make_packet, modulate_bpsk
from clusterldpc.clustergraph import BitAttachment, CodeGraph, compile_code
from clusterldpc.decoder import (
    Decoder,
    DecoderConfig,
    DecoderState,
    check_calibration,
    decode,
    decode_reference,
    maybe_deactivate,
)
from clusterldpc.expfam import GammaBelief, gamma_posterior, vmp_child_to_parent_gamma
from clusterldpc.factortable import SparseFactorTable
from clusterldpc.gf2code import ParityCheckMatrix, builtin_code, syndrome_ok, systematic_encoder

from conftest import all_codewords, exact_bit_posteriors

PRIOR = GammaBelief.from_mean(1.0)


@pytest.fixture(scope="module")
def cg16(h16):
    return compile_code(h16)


@pytest.fixture(scope="module")
def dec16(cg16):
    return Decoder(cg16)


def noisy(enc, rng, precision):
    c = enc.encode(rng.integers(0, 2, enc.k))
    return c, modulate_bpsk(c) + rng.normal(0, 1 / math.sqrt(precision), c.size)


# ------------------------------------------------------------------ trees

TREE_CODES = [
    ParityCheckMatrix(7, ((0, 1, 2), (2, 3, 4), (4, 5), (1, 6))),
    ParityCheckMatrix(9, ((0, 1, 2, 3), (3, 4, 5), (5, 6), (0, 7), (4, 8))),
    ParityCheckMatrix(6, ((0, 1, 2, 3, 4, 5),)),
]


@pytest.mark.parametrize("h", TREE_CODES)
def test_tree_posteriors_are_exact(h):
    cg = compile_code(h)
    assert len(cg.graph.sepsets) == h.n_rows - 1  # a tree
    dec = Decoder(cg)
    book = all_codewords(h)
    enc = systematic_encoder(h)
    rng = np.random.default_rng(11)
    for _ in range(30):
        g = rng.uniform(0.3, 4.0)
        _, x = noisy(enc, rng, g)
        r = dec.decode(x, PRIOR, DecoderConfig(fixed_precision=g))
        want = exact_bit_posteriors(book, x, g)
        if r.converged:
            assert np.max(np.abs(r.per_bit_posteriors[:, 1] - want)) < 1e-9
        # calibration after one pass holds on a tree whether or not the syndrome does
        ref, st_ = decode_reference(cg, x, PRIOR, DecoderConfig(fixed_precision=g, max_iter=1))
        assert np.max(np.abs(ref.per_bit_posteriors[:, 1] - want)) < 1e-9


def test_tree_calibrated_after_one_sweep():
    h = TREE_CODES[0]
    cg = compile_code(h)
    x = modulate_bpsk(np.zeros(7, dtype=np.uint8)) + 0.2
    res, st_ = decode_reference(cg, x, PRIOR, DecoderConfig(fixed_precision=2.0, max_iter=1))
    assert res.converged
    assert check_calibration(st_, 1e-12)


# ------------------------------------------------------- decode behaviour


@pytest.mark.parametrize("name", ["16_8", "nr220"])
def test_noiseless_decodes_in_one_iteration(name):
    h = builtin_code(name)
    enc = systematic_encoder(h)
    dec = Decoder(compile_code(h))
    c = enc.encode(np.random.default_rng(2).integers(0, 2, enc.k))
    for cfg, prior in [(DecoderConfig(fixed_precision=8.76), PRIOR), (DecoderConfig(), GammaBelief.from_mean(8.76))]:
        r = dec.decode(modulate_bpsk(c), prior, cfg)
        assert r.converged and r.iterations == 1
        assert np.array_equal(r.bits, c)


def test_single_bad_bit_is_corrected(h16, dec16):
    x = -np.ones(16)
    x[5] = 0.8  # strong noise pushes one bit across the threshold
    r = dec16.decode(x, PRIOR)
    assert r.converged and not r.bits.any()


def test_config_validation():
    with pytest.raises(ValueError):
        DecoderConfig(max_iter=0)
    with pytest.raises(ValueError):
        DecoderConfig(fixed_precision=-1.0)


def test_input_validation(h16, cg16, dec16):
    with pytest.raises(ValueError):
        dec16.decode(np.zeros(15), PRIOR)
    cl = dict(cg16.attachment.cluster_of)
    n = 5
    cl[n] = next(j for j in range(len(cg16.graph.clusters)) if n not in cg16.graph.clusters[j])
    bad = BitAttachment(cl, frozenset())
    with pytest.raises(ValueError):
        Decoder(CodeGraph(cg16.h, cg16.graph, cg16.schedule, bad, cg16.large_ids))


def test_module_level_decode(h16, cg16):
    x = modulate_bpsk(np.zeros(16, dtype=np.uint8))
    r = decode(h16, cg16.graph, cg16.schedule, cg16.attachment, PRIOR, x)
    assert r.converged and not r.bits.any()


def test_converged_implies_syndrome(h16, enc16, dec16):
    rng = np.random.default_rng(4)
    for _ in range(200):
        _, x = noisy(enc16, rng, 1.0)
        r = dec16.decode(x, PRIOR)
        if r.converged:
            assert syndrome_ok(h16, r.bits)
        assert r.iterations == len(r.trace)
        assert np.allclose(r.per_bit_posteriors.sum(axis=1), 1.0)


def test_trace_hook(dec16):
    seen = []
    dec16.decode(-np.ones(16) + 0.3, PRIOR, on_iteration=seen.append)
    assert [t.iteration for t in seen] == list(range(1, len(seen) + 1))
    assert all(t.active_clusters <= 8 for t in seen)


def test_hard_decision_ties_go_to_zero(dec16):
    r = dec16.decode(np.zeros(16), PRIOR, DecoderConfig(max_iter=1))
    assert not r.bits.any()


# --------------------------------------------------- kernel vs reference


@pytest.mark.parametrize("cfg", [
    DecoderConfig(),
    DecoderConfig(deactivation=False),
    DecoderConfig(fixed_precision=1.3),
    DecoderConfig(deactivation_threshold=1e-4, max_iter=8),
])
def test_kernel_matches_reference(cg16, dec16, enc16, cfg):
    rng = np.random.default_rng(7)
    for _ in range(25):
        _, x = noisy(enc16, rng, rng.uniform(0.5, 3))
        r = dec16.decode(x, PRIOR, cfg)
        ref, _ = decode_reference(cg16, x, PRIOR, cfg)
        assert r.iterations == ref.iterations and r.converged == ref.converged
        assert np.max(np.abs(r.per_bit_posteriors - ref.per_bit_posteriors)) < 1e-10
        assert r.posterior_gamma.eta1 == pytest.approx(ref.posterior_gamma.eta1, rel=1e-10)
        assert [t.active_clusters for t in r.trace] == [t.active_clusters for t in ref.trace]


def test_kernel_matches_reference_random_codes():
    rng = np.random.default_rng(21)
    done = 0
    while done < 6:
        n = int(rng.integers(8, 14))
        m = int(rng.integers(3, n // 2 + 1))
        rows = tuple(tuple(sorted(rng.choice(n, size=int(rng.integers(2, 6)), replace=False))) for _ in range(m))
        h = ParityCheckMatrix(n, rows)
        if len(set().union(*map(set, rows))) < n:
            continue
        cg = compile_code(h)
        dec = Decoder(cg)
        for _ in range(5):
            x = rng.normal(-1, 0.9, n)
            r = dec.decode(x, PRIOR)
            ref, _ = decode_reference(cg, x, PRIOR)
            assert r.iterations == ref.iterations
            assert np.max(np.abs(r.per_bit_posteriors - ref.per_bit_posteriors)) < 1e-10
        done += 1


# --------------------------------------------------------- deactivation


def test_maybe_deactivate_examples():
    p = SparseFactorTable.from_dense([0], np.log([0.5, 0.5]))
    assert maybe_deactivate(p, p, 1e-5)
    # KL of 1e-3 stays active
    q = SparseFactorTable.from_dense([0], np.log([0.5 + 0.02236, 0.5 - 0.02236]))
    from clusterldpc.factortable import symmetric_kl
    assert symmetric_kl(p, q) == pytest.approx(1e-3, rel=0.02)
    assert not maybe_deactivate(p, q, 1e-5)


def test_deactivation_keeps_hard_decisions(h16, enc16, dec16):
    rng = np.random.default_rng(9)
    on, off = DecoderConfig(), DecoderConfig(deactivation=False)
    for _ in range(100):
        _, x = noisy(enc16, rng, rng.uniform(0.6, 3))
        a = dec16.decode(x, PRIOR, on)
        b = dec16.decode(x, PRIOR, off)
        assert np.array_equal(a.bits, b.bits)


def test_deactivation_reduces_active_clusters_on_nr220():
    h = builtin_code("nr220")
    enc = systematic_encoder(h)
    dec = Decoder(compile_code(h))
    rng = np.random.default_rng(1)
    total_on = total_off = 0
    for _ in range(20):
        c, x = noisy(enc, rng, 2.5)
        a = dec.decode(x, PRIOR, DecoderConfig(fixed_precision=2.5))
        b = dec.decode(x, PRIOR, DecoderConfig(fixed_precision=2.5, deactivation=False))
        assert np.array_equal(a.bits, b.bits)
        total_on += sum(t.active_clusters for t in a.trace)
        total_off += sum(t.active_clusters for t in b.trace)
    assert total_on < total_off


# ------------------------------------------------------------ invariants


def test_message_order_safety(enc16, dec16):
    """No zero division or unnormalizable belief over many random decodes."""
    rng = np.random.default_rng(123)
    for i in range(10000):
        g = rng.uniform(0.2, 10)
        _, x = noisy(enc16, rng, g)
        cfg = DecoderConfig(max_iter=20) if i % 2 else DecoderConfig(fixed_precision=g)
        dec16.decode(x, PRIOR, cfg)


def test_extreme_evidence_prunes_without_error(dec16):
    x = np.array([-60.0] * 8 + [60.0] * 8)
    r = dec16.decode(x, PRIOR, DecoderConfig(fixed_precision=50.0))
    assert r.iterations >= 1  # ran to completion without raising


def test_monotone_syndrome_stop(cg16, enc16, dec16):
    rng = np.random.default_rng(31)
    for _ in range(40):
        _, x = noisy(enc16, rng, 1.5)
        r = dec16.decode(x, PRIOR)
        if not r.converged:
            continue
        more = dec16.decode(x, PRIOR, DecoderConfig(max_iter=r.iterations + 1, calibration_tol=-1.0))
        assert more.iterations == r.iterations + 1
        assert np.array_equal(more.bits, r.bits)


def test_gamma_reset_has_no_accumulation(cg16, enc16):
    rng = np.random.default_rng(8)
    _, x = noisy(enc16, rng, 2.0)
    res, st_ = decode_reference(cg16, x, PRIOR)
    incs = [vmp_child_to_parent_gamma(nd) for nd in st_.bit_nodes]
    once = gamma_posterior(PRIOR, incs)
    twice = gamma_posterior(PRIOR, incs)
    assert once == twice
    assert once.eta1 == pytest.approx(res.posterior_gamma.eta1, rel=1e-14)
    assert once.eta2 == PRIOR.eta2 + 8.0


def test_check_calibration_states(cg16, enc16):
    rng = np.random.default_rng(0)
    fresh_ok = 0
    for _ in range(20):
        _, x = noisy(enc16, rng, 0.5)
        st_ = DecoderState.initial(cg16, x, PRIOR)
        st_.bit_nodes = [nd.__class__(nd.x, nd.gm, (0.0, 1.0) if nd.x > 0 else (1.0, 0.0)) for nd in st_.bit_nodes]
        fresh_ok += check_calibration(st_, 1e-6)
    assert fresh_ok <= 2
    x = modulate_bpsk(enc16.encode(np.array([1, 0, 1, 1, 0, 1, 0, 0])))
    res, st_ = decode_reference(cg16, x, PRIOR)
    assert res.converged and check_calibration(st_, 1e-6)


def test_high_snr_iterations_on_nr220():
    """Tracking at precision 8.76 settles to a few iterations per packet."""
    from clusterldpc.tracker import TrackerState, advance
    h = builtin_code("nr220")
    enc = systematic_encoder(h)
    dec = Decoder(compile_code(h))
    tr = TrackerState.start(PRIOR, 10, 220)
    its = []
    for i in range(200):
        pk = make_packet(enc, 3, i, 8.76)
        r = dec.decode(pk.signal, tr.current_prior)
        tr = advance(tr, r.posterior_gamma)
        its.append(r.iterations)
    assert 1.0 <= np.mean(its[20:]) <= 3.5
