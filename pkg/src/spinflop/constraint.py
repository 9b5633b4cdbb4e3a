"""Effective fields on hidden sites induced by the frozen visible spins.

Freezing the even sublattice turns every bond between a hidden site ``i``
and a frozen site ``j`` into a one-body term ``-J(i,j) <u(theta_j), u(theta_i)>``.
Summing them gives the field ``h_i = sum_j J(i,j) u(theta_j)`` acting on
hidden spins only.

Contributions are accumulated per distance class: inside a class every
coupling is the same float, so the unit vectors are summed first (exactly,
for N/S constraints, whose components are 0 and +-1) and only then
multiplied by the coupling.  Symmetric N/S cancellations therefore come out
as exact zeros rather than as rounding noise.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .couplings import CouplingModel, Family
from .lattice import (
    Constraint,
    LatticeBox,
    SiteClass,
    SpinConfig,
    classify_box,
    dblyalt_constraint,
    unit_vectors,
)

Visible = Union[Constraint, Mapping, SpinConfig]


@dataclass
class FieldMap:
    """Per-site field vectors ``h`` (n_sites, 2); zero on frozen sites."""

    box: LatticeBox
    h: np.ndarray = field(repr=False)
    coupling: CouplingModel
    site_class: np.ndarray = field(repr=False)
    frozen_angles: np.ndarray = field(repr=False)
    released: tuple = ()

    @property
    def free(self) -> np.ndarray:
        """Sites that carry a dynamical spin: hidden sites plus released ones."""
        mask = ~self.box.frozen.copy()
        for site in self.released:
            mask[self.box.index(site)] = True
        return mask

    def at(self, site: Sequence[int]) -> np.ndarray:
        return self.h[self.box.index(site)]

    def scaled(self, factor: float) -> FieldMap:
        return FieldMap(
            self.box,
            self.h * factor,
            self.coupling.with_J(self.coupling.J * factor),
            self.site_class,
            self.frozen_angles,
            self.released,
        )

    def to_csv(self) -> str:
        """CSV with columns ``x[,y],h1,h2,site_class``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y"][: self.box.dimension] + ["h1", "h2", "site_class"])
        for k in range(self.box.n_sites):
            w.writerow(
                [
                    *self.box.coords[k].tolist(),
                    repr(float(self.h[k, 0])),
                    repr(float(self.h[k, 1])),
                    SiteClass(int(self.site_class[k])).label,
                ]
            )
        return buf.getvalue()


def _source_lookup(box: LatticeBox, visible: Visible):
    """Return (fn(coords) -> angles, restrict_to_box)."""
    if callable(visible):
        return visible, False
    if isinstance(visible, SpinConfig):
        if visible.box != box:
            raise ValueError("visible config lives on a different box")
        angles = visible.angles

        def from_config(coords):
            idx = box.indices(coords)
            if np.any(idx < 0):
                raise KeyError("frozen site outside the box of the visible config")
            return angles[idx]

        return from_config, True
    if isinstance(visible, Mapping):
        table = {tuple(int(c) for c in k): float(v) for k, v in visible.items()}
        missing = [box.site(k) for k in np.flatnonzero(box.frozen) if box.site(k) not in table]
        if missing:
            raise KeyError(f"visible constraint misses frozen sites, e.g. {missing[:3]}")

        def from_table(coords):
            return np.array([table[tuple(int(c) for c in row)] for row in coords])

        return from_table, True
    raise TypeError("visible must be a callable constraint, a mapping or a SpinConfig")


def site_field(
    coupling: CouplingModel,
    site: Sequence[int],
    visible: Visible = dblyalt_constraint,
    *,
    box: LatticeBox | None = None,
    released: Sequence[Sequence[int]] = (),
) -> np.ndarray:
    """Field vector on one site from all frozen sites within range.

    Frozen sites listed in ``released`` do not act as sources.  With a
    mapping or SpinConfig as ``visible`` only frozen sites of ``box`` act.
    """
    site = np.asarray(site, dtype=np.int64)
    dim = site.size
    st = coupling.stencil(dim)
    lookup, restrict = (
        _source_lookup(box, visible) if box is not None else (visible, False)
    )
    if not callable(lookup):
        raise TypeError("a box is needed for tabulated constraints")
    src = site[None, :] + st.offsets
    active = np.all(src % 2 == 0, axis=1)
    if restrict:
        active &= box.indices(src) >= 0
    if len(released):
        rel = np.asarray(released, dtype=np.int64).reshape(-1, dim)
        for r in rel:
            active &= ~np.all(src == r, axis=1)
    u = np.zeros((len(src), 2))
    if active.any():
        u[active] = unit_vectors(lookup(src[active]))
    sums = np.add.reduceat(u, st.class_start, axis=0)
    return np.array(
        [math.fsum(st.class_weight * sums[:, 0]), math.fsum(st.class_weight * sums[:, 1])]
    )


def effective_field(
    box: LatticeBox,
    coupling: CouplingModel,
    visible: Visible = dblyalt_constraint,
    released: Sequence[Sequence[int]] = (),
) -> FieldMap:
    """Field map on every hidden (or released) site of ``box``.

    A callable constraint is evaluated on the infinite lattice, so edge
    sites feel the same field as bulk sites; a mapping or SpinConfig
    supplies the frozen angles inside the box only.
    """
    coupling.check_dimension(box.dimension)
    released = tuple(tuple(int(c) for c in s) for s in released)
    for s in released:
        if not (box.contains(s) and box.frozen[box.index(s)]):
            raise ValueError(f"released site {s} is not a frozen site of the box")
    lookup, _ = _source_lookup(box, visible)

    frozen_angles = np.full(box.n_sites, np.nan)
    frozen_angles[box.frozen] = lookup(box.coords[box.frozen])

    try:
        classes = classify_box(box, lookup)
    except ValueError:
        # not an N/S pattern; classes only label hidden-site geometry then
        classes = np.where(box.frozen, SiteClass.FROZEN, -1)

    h = np.zeros((box.n_sites, 2))
    targets = ~box.frozen
    for s in released:
        targets[box.index(s)] = True
    for k in np.flatnonzero(targets):
        h[k] = site_field(coupling, box.coords[k], visible, box=box, released=released)
    return FieldMap(box, h, coupling, classes, frozen_angles, released)


# --------------------------------------------------------------------------
# cancellation checks
# --------------------------------------------------------------------------

ZERO_CLASSES = {
    Family.NEAREST_NEIGHBOR: {3, 4, 5, 6, 7},
    Family.LONG_RANGE_1D: {3},
    Family.LONG_RANGE_2D: {3, 6, 7},
}
POSITIVE_CLASSES = {1, 4}
NEGATIVE_CLASSES = {2, 5}


@dataclass
class CancellationReport:
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)


def verify_cancellation(field_map: FieldMap) -> CancellationReport:
    """Check the field pattern of a doubly alternating constraint.

    Every e1 component must vanish; field-free classes must be exactly zero;
    N-like classes must point North and S-like ones South.  For
    nearest-neighbour couplings the values must be exactly +-2J.
    """
    report = CancellationReport()
    fam = field_map.coupling.family
    J = field_map.coupling.J
    zero = ZERO_CLASSES[fam]
    released = {field_map.box.index(s) for s in field_map.released}
    for k in range(field_map.box.n_sites):
        h = field_map.h[k]
        cls = int(field_map.site_class[k])
        site = field_map.box.site(k)
        if k in released:
            continue
        if h[0] != 0.0:
            report.violations.append((site, cls, tuple(h), "nonzero e1 component"))
            continue
        if cls == SiteClass.FROZEN:
            if h[1] != 0.0:
                report.violations.append((site, cls, tuple(h), "field on a frozen site"))
        elif cls in zero:
            if h[1] != 0.0:
                report.violations.append((site, cls, tuple(h), "expected exact cancellation"))
        elif fam is Family.NEAREST_NEIGHBOR:
            want = 2.0 * J if cls == 1 else -2.0 * J
            if h[1] != want:
                report.violations.append((site, cls, tuple(h), f"expected h2 = {want}"))
        elif cls in POSITIVE_CLASSES and not h[1] > 0:
            report.violations.append((site, cls, tuple(h), "expected a North field"))
        elif cls in NEGATIVE_CLASSES and not h[1] < 0:
            report.violations.append((site, cls, tuple(h), "expected a South field"))
    return report
