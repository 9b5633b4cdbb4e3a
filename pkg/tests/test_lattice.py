from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinflop.lattice import (
    EAST,
    NORTH,
    SOUTH,
    WEST,
    LatticeBox,
    SiteClass,
    SpinConfig,
    build_box,
    classify_box,
    classify_site,
    classify_sites,
    config_to_csv,
    constrained_config,
    dblyalt_angle,
    dblyalt_constraint,
    decimate,
    flipped,
    normalize_angle,
    unit_vectors,
)


# ---- independent oracle: classification from the written definition ------


def _north(a, b):
    # decimated site (a, b) is N iff floor(a/2) + floor(b/2) is even
    return (a // 2 + b // 2) % 2 == 0


def oracle_class(x, y):
    if x % 2 == 0 and y % 2 == 0:
        return "Frozen"
    if x % 2 == 1 and y % 2 == 1:
        corners = {
            (dx, dy): _north((x + dx) // 2, (y + dy) // 2) for dx in (-1, 1) for dy in (-1, 1)
        }
        n = sum(corners.values())
        if n == 4:
            return "Type4"
        if n == 0:
            return "Type5"
        if corners[(-1, 1)] == corners[(1, -1)] and corners[(-1, -1)] == corners[(1, 1)]:
            return "Type7"
        return "Type6"
    if x % 2 == 1:
        a, b = _north((x - 1) // 2, y // 2), _north((x + 1) // 2, y // 2)
    else:
        a, b = _north(x // 2, (y - 1) // 2), _north(x // 2, (y + 1) // 2)
    return "Type1" if a and b else "Type2" if not (a or b) else "Type3"


def test_tile_census_matches_hand_count():
    sites = np.array([(x, y) for x in range(8) for y in range(8)])
    got = Counter(SiteClass(k).label for k in classify_sites(2, sites))
    assert got == {
        "Frozen": 16, "Type1": 8, "Type2": 8, "Type3": 16,
        "Type4": 2, "Type5": 2, "Type6": 8, "Type7": 4,
    }


def test_classification_agrees_with_oracle_on_box():
    box = build_box(2, 12)
    classes = classify_box(box)
    for k, (x, y) in enumerate(box.coords):
        assert SiteClass(int(classes[k])).label == oracle_class(int(x), int(y))


@given(st.integers(-200, 200), st.integers(-200, 200))
def test_classification_period_eight(x, y):
    a = classify_sites(2, np.array([[x, y], [x + 8, y], [x, y - 8]]))
    assert a[0] == a[1] == a[2]


@given(st.integers(-200, 200), st.integers(-200, 200))
def test_flipped_constraint_swaps_n_and_s_classes(x, y):
    swap = {1: 2, 2: 1, 4: 5, 5: 4}
    a = int(classify_sites(2, np.array([[x, y]]))[0])
    b = int(classify_sites(2, np.array([[x, y]]), flipped(dblyalt_constraint))[0])
    assert b == swap.get(a, a)


def test_one_dimensional_pattern():
    assert [dblyalt_angle(a) for a in range(8)] == [NORTH, NORTH, SOUTH, SOUTH] * 2
    box = build_box(1, 8)
    labels = [SiteClass(int(c)).label for c in classify_box(box)]
    # x = -7, -5, ...: frozen neighbours NN, NS, SS, SN, repeating
    hidden = [lab for x, lab in zip(range(-8, 9), labels) if x % 2]
    assert hidden == ["Type1", "Type3", "Type2", "Type3"] * 2


def test_dblyalt_2d_values():
    assert dblyalt_angle((0, 0)) == NORTH
    assert dblyalt_angle((1, 0)) == NORTH
    assert dblyalt_angle((2, 0)) == SOUTH
    assert dblyalt_angle((2, 2)) == NORTH
    assert dblyalt_angle((-1, 0)) == SOUTH
    with pytest.raises(ValueError):
        dblyalt_constraint(np.array([[1, 0]]))


def test_build_box_requires_multiple_of_four():
    for L in (0, 2, 5, 6):
        with pytest.raises(ValueError, match="multiple of 4"):
            build_box(2, L)
    with pytest.raises(ValueError):
        build_box(3, 4)
    box = build_box(2, 4)
    assert box.side == 9 and box.n_sites == 81 and box.n_frozen == 25


def test_index_roundtrip_and_outside():
    box = build_box(2, 4)
    for k in range(box.n_sites):
        assert box.index(box.site(k)) == k
    assert box.indices(np.array([[5, 0], [0, 0]])).tolist() == [-1, box.index((0, 0))]
    with pytest.raises(KeyError):
        box.index((5, 0))


def test_decimate_picks_even_sites_and_iterates():
    box = build_box(2, 8)
    full = SpinConfig(box, np.linspace(-3, 3, box.n_sites))
    half = decimate(full)
    assert half.box.half_extent == 4
    for k, (a, b) in enumerate(half.box.coords):
        assert half.angles[k] == full[(2 * a, 2 * b)]
    quarter = decimate(half)
    assert quarter[(1, -1)] == full[(4, -4)]
    with pytest.raises(ValueError):
        decimate(SpinConfig(LatticeBox(1, 3), 0.0))


def test_constrained_config_has_pattern_on_frozen_sites():
    box = build_box(2, 4)
    cfg = constrained_config(box, EAST)
    for k in np.flatnonzero(box.frozen):
        x, y = box.site(k)
        assert cfg.angles[k] == dblyalt_angle((x // 2, y // 2))
    assert np.all(cfg.angles[~box.frozen] == EAST)


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_normalize_angle_range(t):
    n = normalize_angle(t)
    assert -math.pi < n <= math.pi
    assert math.isclose(math.cos(n), math.cos(t), abs_tol=1e-9)


def test_normalize_keeps_in_range_values_exactly():
    for t in (NORTH, SOUTH, WEST, 0.1234, -3.0):
        assert normalize_angle(t) == t
    assert normalize_angle(-math.pi) == math.pi
    assert normalize_angle(2 * math.pi) == 0.0


def test_unit_vectors_exact_at_compass_points():
    u = unit_vectors([EAST, NORTH, WEST, SOUTH])
    assert u.tolist() == [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]


def test_classify_site_and_csv():
    box = build_box(2, 4)
    assert classify_site(box, (1, 0)) is SiteClass.TYPE1
    assert classify_site(box, (0, 0)) is SiteClass.FROZEN
    text = config_to_csv(constrained_config(box))
    lines = text.splitlines()
    assert lines[0] == "x,y,theta,frozen,site_class"
    assert len(lines) == box.n_sites + 1
