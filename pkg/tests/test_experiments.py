import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clusterldpc.channel import synth_trace
from clusterldpc.experiments import (
    ExperimentConfig,
    Harness,
    ber_summary,
    mismatch_grid,
    moving_average,
    run_ber_sweep,
    run_mismatch,
    run_tracking,
    smoothed_ber,
    write_sweep_csv,
    write_track_csv,
)

A, K = 0.005, 110


def small(**kw):
    base = dict(code="16_8", packets=40, snr_points=2, snr_start=1.0, snr_stop=3.0, model_points=3)
    base.update(kw)
    return ExperimentConfig(**base)


# ------------------------------------------------------------ smoothing


def test_smoothed_single_clean_packet():
    assert smoothed_ber([0], K, A, 10000)[0] == 0.005 / 110.005


def test_smoothed_constant_floor():
    out = smoothed_ber(np.zeros(500), K, A, 100)
    assert np.max(np.abs(out - A / (K + A))) <= 1e-15


def test_smoothed_limit_is_one_over_k():
    out = smoothed_ber(np.ones(50), K, 1e-12, 10)
    np.testing.assert_allclose(out, 1 / K, rtol=1e-12)


def test_smoothed_crafted_window():
    e = [0, 3, 0, 1, 5]
    out = smoothed_ber(e, K, A, 3)
    terms = [(A + x) / (K + A) for x in e]
    want = [sum(terms[0:2]) / 2, sum(terms[0:3]) / 3, sum(terms[1:4]) / 3, sum(terms[2:5]) / 3,
            sum(terms[3:5]) / 2]
    assert np.max(np.abs(out - want)) <= 1e-15


def test_smoothed_long_sequence_stays_exact():
    rng = np.random.default_rng(3)
    e = rng.integers(0, 4, 30000)
    e[::7] = 0
    out = smoothed_ber(e, K, A, 10000)
    for i in (0, 4999, 5000, 17123, 29999):
        lo, hi = max(0, i - 5000), min(e.size, i + 5000)
        want = math.fsum((A + int(x)) / (K + A) for x in e[lo:hi]) / (hi - lo)
        assert abs(out[i] - want) <= 1e-15


def test_smoothed_rejects_bad_args():
    with pytest.raises(ValueError):
        smoothed_ber([0], K, 0.0)
    with pytest.raises(ValueError):
        smoothed_ber([0], K, A, 0)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=60), st.integers(1, 80))
def test_moving_average_matches_direct(v, w):
    got = moving_average(v, w)
    n = len(v)
    for i in range(n):
        lo, hi = max(0, i - w // 2), min(n, i - w // 2 + w)
        assert got[i] == pytest.approx(np.mean(v[lo:hi]), rel=1e-9, abs=1e-9)


def test_ber_summary():
    assert ber_summary([3], 10) == (0.3, 0.0)
    m, ci = ber_summary([0, 2, 4], 10)
    assert m == pytest.approx(0.2)
    assert ci == pytest.approx(1.96 * 0.2 / np.sqrt(3))


# --------------------------------------------------------------- config


@pytest.mark.parametrize("kw", [
    {"snr_points": 0}, {"packets": 0}, {"modes": ("estimate", "estimate")}, {"modes": ("magic",)}, {"S": 0},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_modes_from_string():
    assert ExperimentConfig(modes="perfect, fixed").modes == ("perfect", "fixed")


def test_mismatch_grid_brackets_actual():
    actual, grid = mismatch_grid(ExperimentConfig(), 0.5)
    assert actual == pytest.approx(1.2057, abs=1e-4)
    assert grid[0] == pytest.approx(actual - 1.5) and grid[-1] == pytest.approx(actual + 2.5)
    assert np.any(np.isclose(grid, actual))


# --------------------------------------------------------------- runners


def test_modes_see_identical_packets():
    cfg = small(modes=("estimate", "perfect", "fixed", "fixed-offset"))
    hs = Harness(cfg)
    seen = {}
    real = hs.decoder.decode

    def spy(x, prior, dcfg=None, **kw):
        seen.setdefault(mode, []).append(np.array(x))
        return real(x, prior, dcfg, **kw)

    hs.decoder.decode = spy
    prec = [2.0] * 10
    for mode in cfg.modes:
        hs.run_stream(mode, prec, 2.0)
    ref = seen["estimate"]
    for mode in cfg.modes:
        assert all(np.array_equal(a, b) for a, b in zip(ref, seen[mode]))


def test_perfect_mode_reports_true_precision():
    hs = Harness(small())
    recs, _ = hs.run_stream("perfect", [1.5, 2.5, 3.5])
    assert [r.est_mean for r in recs] == [1.5, 2.5, 3.5]
    with pytest.raises(ValueError):
        hs.run_stream("fixed", [1.0])


def test_sweep_summary_is_recomputable():
    cfg = small()
    hs = Harness(cfg)
    rows = run_ber_sweep(cfg, hs)
    assert [(r.snr_db, r.mode) for r in rows] == [(1.0, "estimate"), (1.0, "perfect"), (3.0, "estimate"),
                                                  (3.0, "perfect")]
    from clusterldpc.tracker import snr_db_to_precision
    for row in rows:
        recs, _ = hs.run_stream(row.mode, [snr_db_to_precision(row.snr_db, hs.R)] * cfg.packets)
        assert abs(row.ber - np.mean([r.errors for r in recs]) / hs.K) <= 1e-12
        assert abs(row.mean_iters - np.mean([r.iters for r in recs])) <= 1e-12


def test_tracking_outputs_and_determinism():
    cfg = small(modes=("perfect", "fixed", "estimate"), packets=30, window=10)
    trace = synth_trace("step", 30, before=6, after=2, at=15)
    a = run_tracking(cfg, trace)
    b = run_tracking(cfg, trace)
    assert a.fixed_precision is not None and a.fixed_precision > 0
    assert set(a.summary) == {"perfect", "fixed", "estimate"}
    assert len(a.records) == 90 and len(a.histories["estimate"]) == 30
    for mode, s in a.summary.items():
        errs = [r.errors for r in a.records if r.mode == mode]
        assert abs(s["ber"] - np.mean(errs) / 8) <= 1e-12
    bufa, bufb = io.StringIO(), io.StringIO()
    write_track_csv(bufa, a.records)
    write_track_csv(bufb, b.records)
    assert bufa.getvalue() == bufb.getvalue()
    with pytest.raises(ValueError):
        run_tracking(small(packets=31), trace)


def test_fixed_precision_override():
    cfg = small(modes=("fixed",), packets=5, fixed_precision=3.0)
    res = run_tracking(cfg, synth_trace("constant", 5, value=2.0))
    assert res.fixed_precision == 3.0
    assert all(r.est_mean == 3.0 for r in res.records)


def test_mismatch_rows_and_seed_dependence():
    rows = run_mismatch(small(packets=20))
    assert len(rows) == 3 and all(0 <= r.ber <= 1 for r in rows)
    b1, b2 = io.StringIO(), io.StringIO()
    write_sweep_csv(b1, run_ber_sweep(small(packets=20, seed=1)))
    write_sweep_csv(b2, run_ber_sweep(small(packets=20, seed=2)))
    assert b1.getvalue() != b2.getvalue()
