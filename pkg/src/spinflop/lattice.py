"""Finite boxes of Z^d with the even sublattice frozen.

Sites are integer coordinate tuples.  A box of half-extent ``L`` holds the
sites ``{-L, ..., L}^d`` in row-major order (first coordinate slowest).  The
sites whose coordinates are all even carry the *visible* (decimated) spins;
every other site carries a *hidden* spin.

The doubly alternating visible pattern puts a North spin at decimated site
``(a, b)`` when ``floor(a/2) + floor(b/2)`` is even and a South spin
otherwise, so it repeats every 4 decimated (8 original) lattice units.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

EAST = 0.0
NORTH = math.pi / 2
WEST = math.pi
SOUTH = -math.pi / 2

EDGE_RULES = ("open", "dressed")

# A constraint maps an (n, d) array of frozen-site coordinates (original
# lattice) to n angles.
Constraint = Callable[[np.ndarray], np.ndarray]


def normalize_angle(theta):
    """Map angles into (-pi, pi]; -pi maps to pi.

    Angles already in range are returned bit-for-bit unchanged.
    """
    t0 = np.asarray(theta, dtype=float)
    t = np.mod(t0 + math.pi, 2 * math.pi) - math.pi
    t = np.where(t <= -math.pi, t + 2 * math.pi, t)
    t = np.where((t0 > -math.pi) & (t0 <= math.pi), t0, t)
    if t.ndim == 0:
        return float(t)
    return t


def unit_vectors(theta) -> np.ndarray:
    """Return ``(cos, sin)`` rows, exact at the four canonical directions."""
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    c = np.cos(t)
    s = np.sin(t)
    vertical = (t == NORTH) | (t == SOUTH)
    horizontal = (t == EAST) | (t == WEST)
    c[vertical] = 0.0
    s[vertical] = np.sign(t[vertical])
    s[horizontal] = 0.0
    c[horizontal] = np.where(t[horizontal] == EAST, 1.0, -1.0)
    return np.stack([c, s], axis=-1)


class SiteClass(enum.IntEnum):
    """Site types of the decorated lattice under an N/S visible pattern."""

    FROZEN = 0
    TYPE1 = 1  # between two N
    TYPE2 = 2  # between two S
    TYPE3 = 3  # between an N and an S
    TYPE4 = 4  # centre of an all-N square
    TYPE5 = 5  # centre of an all-S square
    TYPE6 = 6  # square with the two N corners on one side
    TYPE7 = 7  # square with the two N corners diagonally opposite

    @property
    def label(self) -> str:
        return "Frozen" if self is SiteClass.FROZEN else f"Type{int(self)}"


@dataclass(frozen=True)
class LatticeBox:
    """The box ``{-L..L}^d`` with its even sublattice marked frozen.

    ``build_box`` is the validating constructor; this class itself accepts
    any positive half-extent so that decimated boxes (``L/2``) can exist.
    """

    dimension: int
    half_extent: int
    edge_rule: str = "open"

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.half_extent < 1:
            raise ValueError("half_extent must be positive")
        if self.edge_rule not in EDGE_RULES:
            raise ValueError(f"edge_rule must be one of {EDGE_RULES}")

    @property
    def side(self) -> int:
        return 2 * self.half_extent + 1

    @property
    def n_sites(self) -> int:
        return self.side**self.dimension

    @cached_property
    def coords(self) -> np.ndarray:
        """(n_sites, d) integer coordinates in row-major order."""
        axes = [np.arange(-self.half_extent, self.half_extent + 1)] * self.dimension
        grid = np.meshgrid(*axes, indexing="ij")
        out = np.stack([g.ravel() for g in grid], axis=1)
        out.flags.writeable = False
        return out

    @cached_property
    def frozen(self) -> np.ndarray:
        """Boolean mask of the even sublattice."""
        out = np.all(self.coords % 2 == 0, axis=1)
        out.flags.writeable = False
        return out

    @property
    def n_frozen(self) -> int:
        return int(self.frozen.sum())

    def contains(self, site: Sequence[int]) -> bool:
        return len(site) == self.dimension and all(
            -self.half_extent <= int(c) <= self.half_extent for c in site
        )

    def index(self, site: Sequence[int]) -> int:
        """Row-major index of ``site``; raises ``KeyError`` outside the box."""
        if not self.contains(site):
            raise KeyError(f"site {tuple(site)} is outside the box")
        idx = 0
        for c in site:
            idx = idx * self.side + (int(c) + self.half_extent)
        return idx

    def indices(self, sites: np.ndarray) -> np.ndarray:
        """Vectorised ``index``; returns -1 for sites outside the box."""
        sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
        shifted = sites + self.half_extent
        inside = np.all((shifted >= 0) & (shifted < self.side), axis=1)
        idx = np.zeros(len(sites), dtype=np.int64)
        for k in range(self.dimension):
            idx = idx * self.side + shifted[:, k]
        return np.where(inside, idx, -1)

    def site(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in self.coords[index])

    @property
    def origin(self) -> tuple[int, ...]:
        return (0,) * self.dimension


def build_box(dimension: int, half_extent: int, edge_rule: str = "open") -> LatticeBox:
    """Validated box whose extent is commensurate with the period-4 pattern."""
    if dimension not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {dimension}")
    if half_extent < 4 or half_extent % 4 != 0:
        raise ValueError(f"half_extent must be a multiple of 4 (>= 4), got {half_extent}")
    return LatticeBox(dimension, half_extent, edge_rule)


@dataclass
class SpinConfig:
    """One angle per site of ``box``, kept in (-pi, pi]."""

    box: LatticeBox
    angles: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        if a.shape == ():
            a = np.full(self.box.n_sites, float(a))
        if a.shape != (self.box.n_sites,):
            raise ValueError(f"expected {self.box.n_sites} angles, got shape {a.shape}")
        self.angles = np.array(normalize_angle(a), dtype=float, ndmin=1)

    def __getitem__(self, site) -> float:
        return float(self.angles[self.box.index(site)])

    def __setitem__(self, site, value: float) -> None:
        self.angles[self.box.index(site)] = normalize_angle(value)

    def copy(self) -> SpinConfig:
        return SpinConfig(self.box, self.angles.copy())


# --------------------------------------------------------------------------
# decimation and the doubly alternating pattern
# --------------------------------------------------------------------------


def decimate(full: SpinConfig) -> SpinConfig:
    """Keep the spins at even sites: ``out[i] = full[2 i]``."""
    box = full.box
    if box.half_extent % 2:
        raise ValueError("decimation needs an even half-extent")
    small = LatticeBox(box.dimension, box.half_extent // 2, box.edge_rule)
    src = box.indices(2 * small.coords)
    return SpinConfig(small, full.angles[src].copy())


def dblyalt_angle(visible):
    """Doubly alternating angle at decimated coordinates ``visible``.

    Accepts one site (int or tuple) or an (n, d) array; returns
    ``+pi/2`` or ``-pi/2``.
    """
    v = np.asarray(visible, dtype=np.int64)
    scalar = v.ndim <= 1
    v = v.reshape(1, -1) if scalar else v
    parity = np.floor_divide(v, 2).sum(axis=1) % 2
    out = np.where(parity == 0, NORTH, SOUTH)
    return float(out[0]) if scalar else out


def dblyalt_constraint(coords: np.ndarray) -> np.ndarray:
    """Doubly alternating constraint on even original-lattice sites."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    if np.any(coords % 2):
        raise ValueError("constraint evaluated at a non-frozen site")
    return dblyalt_angle(coords // 2)


def flipped(constraint: Constraint) -> Constraint:
    """The N <-> S image of an N/S constraint."""

    def _flipped(coords):
        return -np.asarray(constraint(coords), dtype=float)

    return _flipped


# --------------------------------------------------------------------------
# site classification
# --------------------------------------------------------------------------


def _is_north(constraint: Constraint, sites) -> np.ndarray:
    return np.asarray(constraint(np.asarray(sites, dtype=np.int64))) > 0


def classify_site(
    box: LatticeBox, site: Sequence[int], constraint: Constraint = dblyalt_constraint
) -> SiteClass:
    """Classify one site by the N/S pattern of its frozen neighbours.

    The constraint is evaluated on the infinite lattice, so sites at the box
    edge classify exactly like bulk sites.
    """
    return SiteClass(int(classify_sites(box.dimension, np.array([site]), constraint)[0]))


def classify_sites(
    dimension: int, sites: np.ndarray, constraint: Constraint = dblyalt_constraint
) -> np.ndarray:
    """Vectorised classification of an (n, d) array of sites."""
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    if sites.shape[1] != dimension:
        raise ValueError("site dimension mismatch")
    odd = sites % 2 != 0
    out = np.zeros(len(sites), dtype=np.int64)

    if dimension == 1:
        hidden = odd[:, 0]
        x = sites[hidden]
        out[hidden] = _pair_class(_is_north(constraint, x - 1), _is_north(constraint, x + 1))
        return out

    # exactly one odd coordinate: the two frozen neighbours straddle it
    for axis in (0, 1):
        sel = odd[:, axis] & ~odd[:, 1 - axis]
        step = np.zeros(2, dtype=np.int64)
        step[axis] = 1
        s = sites[sel]
        out[sel] = _pair_class(_is_north(constraint, s - step), _is_north(constraint, s + step))

    # both odd: four diagonal frozen neighbours
    sel = odd[:, 0] & odd[:, 1]
    s = sites[sel]
    nw = _is_north(constraint, s + (-1, 1))
    ne = _is_north(constraint, s + (1, 1))
    sw = _is_north(constraint, s + (-1, -1))
    se = _is_north(constraint, s + (1, -1))
    count = nw.astype(int) + ne + sw + se
    if np.any(count % 2):
        raise ValueError("square with an odd number of N corners has no site type")
    opposite = (nw == se) & (ne == sw) & (nw != ne)
    cls = np.where(
        count == 4,
        SiteClass.TYPE4,
        np.where(count == 0, SiteClass.TYPE5, np.where(opposite, SiteClass.TYPE7, SiteClass.TYPE6)),
    )
    out[sel] = cls
    return out


def _pair_class(a_north: np.ndarray, b_north: np.ndarray) -> np.ndarray:
    return np.where(
        a_north & b_north,
        SiteClass.TYPE1,
        np.where(~a_north & ~b_north, SiteClass.TYPE2, SiteClass.TYPE3),
    )


def classify_box(box: LatticeBox, constraint: Constraint = dblyalt_constraint) -> np.ndarray:
    """SiteClass code for every site of ``box``."""
    return classify_sites(box.dimension, box.coords, constraint)


# --------------------------------------------------------------------------
# configurations and CSV dumps
# --------------------------------------------------------------------------


def constrained_config(
    box: LatticeBox,
    hidden_angle: float | np.ndarray = EAST,
    constraint: Constraint = dblyalt_constraint,
) -> SpinConfig:
    """Config with frozen sites from ``constraint`` and hidden sites set."""
    angles = np.empty(box.n_sites)
    angles[:] = hidden_angle
    angles[box.frozen] = constraint(box.coords[box.frozen])
    return SpinConfig(box, angles)


def _coord_header(dimension: int) -> list[str]:
    return ["x", "y"][:dimension]


def config_rows(config: SpinConfig, classes: np.ndarray | None = None) -> Iterable[list]:
    box = config.box
    if classes is None:
        classes = classify_box(box)
    for k in range(box.n_sites):
        yield [
            *box.coords[k].tolist(),
            repr(float(config.angles[k])),
            int(box.frozen[k]),
            SiteClass(int(classes[k])).label,
        ]


def config_to_csv(config: SpinConfig, classes: np.ndarray | None = None) -> str:
    """CSV with columns ``x[,y],theta,frozen,site_class``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_coord_header(config.box.dimension) + ["theta", "frozen", "site_class"])
    w.writerows(config_rows(config, classes))
    return buf.getvalue()
