from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinflop.constraint import effective_field, site_field, verify_cancellation
from spinflop.couplings import CouplingModel
from spinflop.lattice import (
    SiteClass,
    SpinConfig,
    build_box,
    constrained_config,
    dblyalt_angle,
)


def brute_field(model: CouplingModel, site):
    """Plain double loop over every frozen site within range."""
    R = model.range
    d = len(site)
    hx = hy = 0.0
    rng = range(-R, R + 1)
    offs = [(a,) for a in rng] if d == 1 else [(a, b) for a in rng for b in rng]
    for v in offs:
        j = tuple(s + o for s, o in zip(site, v))
        if any(c % 2 for c in j) or j == tuple(site):
            continue
        r2 = sum(o * o for o in v)
        if r2 > R * R:
            continue
        w = model.J if model.family.value == "nn" and r2 == 1 else 0.0
        if model.family.value == "lr1d":
            w = model.J / r2
        elif model.family.value == "lr2d":
            w = model.J / r2**2
        t = dblyalt_angle(tuple(c // 2 for c in j))
        hx += w * math.cos(t)
        hy += w * math.sin(t)
    return hx, hy


def test_nn_field_pattern_exact():
    box = build_box(2, 8)
    fm = effective_field(box, CouplingModel("nn"))
    for k in range(box.n_sites):
        cls = int(fm.site_class[k])
        want = {1: 2.0, 2: -2.0}.get(cls, 0.0)
        assert fm.h[k, 0] == 0.0
        assert fm.h[k, 1] == want
    assert verify_cancellation(fm).passed


@pytest.mark.parametrize(
    "model, dim",
    [
        (CouplingModel("nn", 1.3), 2),
        (CouplingModel("lr1d", 1.0, 40), 1),
        (CouplingModel("lr2d", 1.0, 9), 2),
    ],
)
def test_cancellation_for_every_family(model, dim):
    fm = effective_field(build_box(dim, 8), model)
    report = verify_cancellation(fm)
    assert report.passed, report.violations[:5]


@settings(deadline=None, max_examples=30)
@given(st.integers(-20, 20), st.integers(-20, 20))
def test_site_field_matches_brute_force_2d(x, y):
    if x % 2 == 0 and y % 2 == 0:
        return
    m = CouplingModel("lr2d", 1.0, 7)
    got = site_field(m, (x, y))
    hx, hy = brute_field(m, (x, y))
    assert got[0] == 0.0
    assert got[1] == pytest.approx(hy, abs=1e-13)
    assert abs(hx) < 1e-12


@settings(deadline=None, max_examples=20)
@given(st.integers(-50, 50))
def test_site_field_matches_brute_force_1d(x):
    if x % 2 == 0:
        return
    m = CouplingModel("lr1d", 2.0, 33)
    assert site_field(m, (x,))[1] == pytest.approx(brute_field(m, (x,))[1], abs=1e-13)


def test_field_linear_in_J():
    box = build_box(2, 4)
    a = effective_field(box, CouplingModel("lr2d", 1.0, 6))
    b = effective_field(box, CouplingModel("lr2d", 2.5, 6))
    np.testing.assert_allclose(b.h, 2.5 * a.h, rtol=1e-14, atol=0)
    np.testing.assert_array_equal(a.scaled(2.0).h, 2.0 * a.h)


def test_released_origin_is_not_a_source():
    box = build_box(2, 4)
    fm = effective_field(box, CouplingModel("nn"), released=[(0, 0)])
    assert fm.at((1, 0))[1] == 1.0
    assert fm.at((0, 1))[1] == 1.0  # (0, 2) is N
    assert fm.at((0, 0)).tolist() == [0.0, 0.0]
    assert fm.free[box.index((0, 0))]
    with pytest.raises(ValueError):
        effective_field(box, CouplingModel("nn"), released=[(1, 0)])


def test_tabulated_constraints():
    box = build_box(2, 4)
    cfg = constrained_config(box)
    from_cfg = effective_field(box, CouplingModel("nn"), cfg)
    # inside the box a tabulated pattern reproduces the callable one
    inner = np.all(np.abs(box.coords) < 4, axis=1)
    full = effective_field(box, CouplingModel("nn"))
    np.testing.assert_array_equal(from_cfg.h[inner], full.h[inner])
    table = {box.site(k): cfg.angles[k] for k in np.flatnonzero(box.frozen)}
    np.testing.assert_array_equal(effective_field(box, CouplingModel("nn"), table).h, from_cfg.h)
    table.pop((0, 0))
    with pytest.raises(KeyError):
        effective_field(box, CouplingModel("nn"), table)
    with pytest.raises(ValueError):
        effective_field(box, CouplingModel("nn"), SpinConfig(build_box(2, 8), 0.0))


def test_homogeneous_north_constraint_breaks_pattern_classes():
    box = build_box(2, 4)
    fm = effective_field(box, CouplingModel("nn"), lambda c: np.full(len(c), math.pi / 2))
    assert fm.at((1, 0)).tolist() == [0.0, 2.0]
    assert fm.at((1, 1)).tolist() == [0.0, 0.0]
    assert int(fm.site_class[box.index((1, 1))]) == SiteClass.TYPE4


def test_field_csv():
    fm = effective_field(build_box(2, 4), CouplingModel("nn"))
    lines = fm.to_csv().splitlines()
    assert lines[0] == "x,y,h1,h2,site_class"
    h2 = {float(l.split(",")[3]) for l in lines[1:]}
    assert h2 == {-2.0, 0.0, 2.0}
