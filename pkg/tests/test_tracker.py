import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clusterldpc.expfam import GammaBelief
from clusterldpc.tracker import (
    HISTORY_COLUMNS,
    TrackerState,
    advance,
    cap_belief,
    precision_to_snr_db,
    run_filter,
    snr_db_to_precision,
    write_history_csv,
)

SN = 10 * 220


def belief(eta2, mean=3.0):
    return GammaBelief(-(eta2 + 1) / mean, eta2)


def test_cap_boundary_passes_through():
    b = belief(2200.0)
    st_ = advance(TrackerState.start(GammaBelief.from_mean(1.0), 10, 220), b)
    assert st_.current_prior == b


def test_cap_scales_by_half():
    b = belief(4400.0)
    nxt = advance(TrackerState.start(GammaBelief.from_mean(1.0), 10, 220), b).current_prior
    assert nxt.eta2 == 2200.0
    assert nxt.eta1 == pytest.approx(b.eta1 * 0.5, rel=1e-15)


def test_small_first_posterior_passes_through():
    b = belief(111.0)
    assert advance(TrackerState.start(b, 10, 220), b).current_prior == b


def test_no_window_never_caps():
    b = belief(1e9)
    assert advance(TrackerState.start(b, None, 220), b).current_prior == b


@given(st.floats(2200.0, 1e7), st.floats(0.05, 50.0))
def test_rescale_preserves_ratio(eta2, mean):
    b = belief(eta2, mean)
    c = cap_belief(b, SN)
    assert c.eta2 <= SN
    assert c.eta1 / c.eta2 == pytest.approx(b.eta1 / b.eta2, rel=1e-15)
    # mean = (eta2 + 1) / -eta1, so the shift is exactly (1/c - 1) / (eta2 + 1)
    k = b.eta2 / SN
    assert c.mean / b.mean - 1 == pytest.approx((k - 1) / (b.eta2 + 1), rel=1e-9, abs=1e-15)


@given(st.floats(0.0, 110.0), st.floats(0.05, 50.0))
def test_rescale_mean_shift_is_small(over, mean):
    # one packet adds N/2 = 110 to eta2, so a capped belief overshoots by at most that
    b = belief(SN + over, mean)
    c = cap_belief(b, SN)
    assert abs(c.mean / b.mean - 1) <= 2 / b.nu


def test_eta2_pinned_after_cap_binds():
    # each packet adds N/2 to eta2
    rng = np.random.default_rng(0)
    posts = []
    st_ = TrackerState.start(GammaBelief.from_mean(1.0), 10, 220)
    bound_at = None
    for i in range(60):
        p = GammaBelief(st_.current_prior.eta1 - 0.5 * rng.uniform(200, 260) / 2, st_.current_prior.eta2 + 110)
        st_ = advance(st_, p)
        if bound_at is None and p.eta2 > SN:
            bound_at = i
        if bound_at is not None:
            assert st_.current_prior.eta2 == SN
    assert bound_at is not None and bound_at < 25


def test_forgetting_paired_traces():
    def run(first):
        st_ = TrackerState.start(GammaBelief.from_mean(1.0), 10, 220)
        gaps = []
        for i in range(200):
            ss = first if i == 0 else 25.0  # sum of squared residuals for the packet
            p = GammaBelief(st_.current_prior.eta1 - 0.5 * ss, st_.current_prior.eta2 + 110)
            st_ = advance(st_, p)
            gaps.append(st_.current_prior.mean)
        return np.array(gaps)

    a, b = run(25.0), run(500.0)
    d = np.abs(a - b)
    assert d[0] > 0
    assert np.all(np.diff(d[25:]) <= 0)
    assert d[-1] < 1e-3 * d[0]


def test_history_records_every_packet():
    posts = [belief(50.0 + i) for i in range(5)]
    st_ = run_filter(GammaBelief.from_mean(1.0), posts, 10, 220)
    rows = st_.history_rows()
    assert [r.packet_index for r in rows] == list(range(5))
    assert rows[-1].posterior_mean == pytest.approx(posts[-1].mean)
    buf = io.StringIO()
    write_history_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(HISTORY_COLUMNS)
    assert len(lines) == 6
    assert lines[1].split(",")[1] == ""


def test_offset_lowers_mean():
    b = belief(100.0, 4.0)
    nxt = advance(TrackerState.start(b, 10, 220), b, offset_db=-0.1).current_prior
    assert nxt.mean == pytest.approx(4.0 * 10 ** -0.01)


def test_state_validation():
    with pytest.raises(ValueError):
        TrackerState.start(GammaBelief.from_mean(1.0), 0, 220)
    with pytest.raises(ValueError):
        TrackerState.start(GammaBelief.from_mean(1.0), 10, 0)


def test_snr_examples():
    assert precision_to_snr_db(8.76) == pytest.approx(9.42, abs=0.01)
    assert round(precision_to_snr_db(1.32), 2) in (1.21, 1.22)
    assert precision_to_snr_db(2.0, R=1.0) == 0.0


@pytest.mark.parametrize("args", [(0.0,), (-1.0,), (1.0, 0.0), (1.0, 1.5), (1.0, 0.5, 0.0)])
def test_snr_rejects_bad_inputs(args):
    with pytest.raises(ValueError):
        precision_to_snr_db(*args)


@given(st.floats(1e-6, 1e6), st.floats(0.01, 1.0), st.floats(0.1, 10.0))
def test_snr_round_trip(g, R, Eb):
    assert snr_db_to_precision(precision_to_snr_db(g, R, Eb), R, Eb) == pytest.approx(g, rel=1e-12)
