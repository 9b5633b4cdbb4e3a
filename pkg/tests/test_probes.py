from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinflop.couplings import CouplingModel
from spinflop.groundstate import ground_pair
from spinflop.probes import (
    _run_cell,
    classify_modes,
    discontinuity_gap,
    ground_dressings,
    mirror_bins,
    mirror_histogram,
    released_model,
    spectral_gap_contrast,
    spinflop_histogram,
    verdict,
)
from spinflop.sampler import McParams

# regression anchors from the first pinned runs
LAMBDA_MIN_NN_L8 = 0.12131359918283964
HIST_MODE_NN_L8_BETA5 = 28 / 41


def test_verdicts():
    assert verdict(0.5, 0.05, 0.2) == "gap persists"
    assert verdict(0.01, 0.05, 0.2) == "gap vanishes"
    assert verdict(0.2, 0.05, 0.2) == "inconclusive"


def test_gap_preconditions():
    p = McParams(beta=1.0, sweeps=10)
    with pytest.raises(ValueError, match="multiples of 4"):
        discontinuity_gap("nn", 1.0, [1.0], [6], p)
    with pytest.raises(ValueError, match="increasing"):
        discontinuity_gap("nn", 1.0, [1.0], [12, 8], p)
    with pytest.raises(ValueError):
        discontinuity_gap("nn", 1.0, [1.0], [8], p, delta=0.0)


@pytest.fixture(scope="module")
def gap8():
    p = McParams(beta=1.0, sweeps=6000, burnin=1000, seed=5)
    return discontinuity_gap("nn", 1.0, [5.0, 0.1], [8], p, 0.2)


def test_gap_low_and_high_temperature(gap8):
    low, high = gap8
    assert low.verdict == "gap persists" and low.exceeds_delta_everywhere
    assert high.verdict == "gap vanishes" and all(high.consistent_with_zero)


def test_paired_estimates_are_exact_mirrors(gap8):
    for res in gap8:
        cell = res.cells[0]
        assert cell.me.mean == -cell.mw.mean
        assert cell.me.stderr == cell.mw.stderr


def test_swapping_dressings_negates_gap_in_distribution():
    c = CouplingModel("nn")
    model = released_model(c, 2, 8)
    d_me, d_mw, _ = ground_dressings(c, 2, 8)
    p = McParams(beta=3.0, sweeps=4000, burnin=1000, seed=1)
    ss = np.random.SeedSequence([1, 0])
    a = _run_cell(model, d_me, d_mw, p, 3.0, ss, "north", True, None)
    b = _run_cell(model, d_mw, d_me, p, 3.0, ss, "north", True, None)
    assert a.gap > 0
    assert abs(a.gap + b.gap) < 4 * np.hypot(a.gap_stderr, b.gap_stderr)


def test_thread_count_does_not_change_results():
    p = McParams(beta=1.0, sweeps=300, burnin=100, seed=2)
    one = discontinuity_gap("nn", 1.0, [3.0, 0.5], [4, 8], p, threads=1)
    two = discontinuity_gap("nn", 1.0, [3.0, 0.5], [4, 8], p, threads=2)
    assert [r.gaps for r in one] == [r.gaps for r in two]
    assert one[0].to_dict()["seeds"] == [[2, 0], [2, 1]]


def test_one_dimensional_long_range_gap_runs():
    p = McParams(beta=1.0, sweeps=400, burnin=100, seed=3)
    (res,) = discontinuity_gap("lr1d", 1.0, [4.0], [16], p, dimension=1, truncation_radius=16)
    assert res.gaps[0] > 0


def test_mirror_bins_exact():
    e = mirror_bins(41)
    assert len(e) == 42
    assert np.array_equal(e, -e[::-1])
    assert e[0] == -1.0 and e[-1] == 1.0
    with pytest.raises(ValueError):
        mirror_bins(40)


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=200))
def test_histogram_of_mirrored_stream_is_mirrored(xs):
    x = np.array(xs)
    a = mirror_histogram(x, 41)
    b = mirror_histogram(-x, 41)
    assert np.array_equal(a, b[::-1])
    assert a.sum() == len(x)


def test_histogram_edge_values_mirror():
    e = mirror_bins(41)
    a = mirror_histogram(e, 41)
    assert np.array_equal(a, a[::-1])


def test_mode_classification():
    c = np.linspace(-1, 1, 5)
    assert classify_modes(np.array([0, 5, 1, 5, 0]), c) == (True, (-0.5, 0.5))
    assert classify_modes(np.array([0, 3, 9, 3, 0]), c)[0] is False


def test_spinflop_histogram_low_and_high_temperature(nn8):
    me, _ = ground_pair(nn8)
    hot = spinflop_histogram(nn8, 0.1, McParams(beta=0.1, sweeps=2000, burnin=500, seed=3), chains=8)
    assert not hot.bimodal
    assert abs(hot.mean) < 3 * hot.stderr
    cold = spinflop_histogram(nn8, 5.0, McParams(beta=5.0, sweeps=5000, burnin=2000, seed=3))
    assert cold.bimodal
    lo, hi = cold.modes
    assert lo == -hi
    assert 0.5 * me.m_ew < hi < me.m_ew
    assert hi == pytest.approx(HIST_MODE_NN_L8_BETA5)


def test_spectral_gap_contrast():
    s = spectral_gap_contrast(1.0, 8)
    assert s.lambda_min_constrained == pytest.approx(LAMBDA_MIN_NN_L8, rel=1e-8)
    assert abs(s.lambda_min_unconstrained) < 1e-10
    assert s.zero_mode_uniform
    s3 = spectral_gap_contrast(3.0, 8)
    assert s3.lambda_min_constrained == pytest.approx(3 * LAMBDA_MIN_NN_L8, rel=1e-8)
