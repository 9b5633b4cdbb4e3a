"""Ferromagnetic pair couplings: nearest neighbour, 1d 1/r^2 and 2d 1/r^4."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

# Catalan's constant G
CATALAN = 0.91596559417721901505460351493238411


class Family(str, enum.Enum):
    NEAREST_NEIGHBOR = "nn"
    LONG_RANGE_1D = "lr1d"
    LONG_RANGE_2D = "lr2d"


class Stencil(NamedTuple):
    """All displacements within range, grouped by squared length.

    ``offsets`` is (m, d) sorted by squared length (then lexicographically);
    ``class_start[k]`` is the first row of the k-th distance class and
    ``class_weight[k]`` its coupling.
    """

    offsets: np.ndarray
    sqdist: np.ndarray
    weights: np.ndarray
    class_start: np.ndarray
    class_weight: np.ndarray


def _sqnorm(v: np.ndarray) -> np.ndarray:
    # Euclidean; swap for np.max(np.abs(v), axis=-1) ** 2 to use the sup norm
    return np.sum(v * v, axis=-1)


@dataclass(frozen=True)
class CouplingModel:
    """Coupling family, overall strength ``J`` and truncation radius ``R``.

    Long-range couplings are dropped beyond Euclidean distance ``R``.
    ``truncation_radius`` is ignored by the nearest-neighbour family.
    """

    family: Family = Family.NEAREST_NEIGHBOR
    J: float = 1.0
    truncation_radius: int = 64

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.J >= 0:
            raise ValueError("couplings must be ferromagnetic (J >= 0)")
        if self.family is not Family.NEAREST_NEIGHBOR and self.truncation_radius < 1:
            raise ValueError("truncation_radius must be a positive integer")

    @property
    def range(self) -> int:
        return 1 if self.family is Family.NEAREST_NEIGHBOR else int(self.truncation_radius)

    @property
    def is_long_range(self) -> bool:
        return self.family is not Family.NEAREST_NEIGHBOR

    def check_dimension(self, dimension: int) -> None:
        need = {Family.LONG_RANGE_1D: 1, Family.LONG_RANGE_2D: 2}.get(self.family)
        if need is not None and dimension != need:
            raise ValueError(f"{self.family.value} couplings live in d={need}, got d={dimension}")

    def weight_sq(self, sqdist) -> np.ndarray:
        """Untruncated coupling as a function of squared distance (> 0)."""
        r2 = np.asarray(sqdist, dtype=float)
        if self.family is Family.NEAREST_NEIGHBOR:
            return np.where(r2 == 1, self.J, 0.0)
        if self.family is Family.LONG_RANGE_1D:
            return self.J / r2
        return self.J / (r2 * r2)

    def __call__(self, i: Sequence[int], j: Sequence[int]) -> float:
        return coupling(self, i, j)

    def stencil(self, dimension: int) -> Stencil:
        self.check_dimension(dimension)
        return _stencil(self.family, float(self.J), self.range, dimension)

    def with_J(self, J: float) -> CouplingModel:
        return CouplingModel(self.family, J, self.truncation_radius)


def coupling(model: CouplingModel, i: Sequence[int], j: Sequence[int]) -> float:
    """J(i, j); symmetric, zero beyond range or truncation."""
    d = np.asarray(i, dtype=np.int64) - np.asarray(j, dtype=np.int64)
    if d.shape != (len(i),) or len(i) != len(j):
        raise ValueError("sites must have the same dimension")
    model.check_dimension(len(i))
    r2 = int(_sqnorm(d))
    if r2 == 0:
        raise ValueError("coupling of a site with itself is undefined")
    if r2 > model.range**2:
        return 0.0
    return float(model.weight_sq(r2))


@lru_cache(maxsize=32)
def _stencil(family: Family, J: float, R: int, dimension: int) -> Stencil:
    model = CouplingModel(family, J, R)
    axis = np.arange(-R, R + 1)
    grid = np.meshgrid(*([axis] * dimension), indexing="ij")
    offsets = np.stack([g.ravel() for g in grid], axis=1)
    r2 = _sqnorm(offsets)
    keep = (r2 > 0) & (r2 <= R * R)
    offsets, r2 = offsets[keep], r2[keep]
    order = np.lexsort(tuple(offsets[:, k] for k in reversed(range(dimension))) + (r2,))
    offsets, r2 = offsets[order], r2[order]
    weights = model.weight_sq(r2)
    if family is Family.NEAREST_NEIGHBOR:
        nz = r2 == 1
        offsets, r2, weights = offsets[nz], r2[nz], weights[nz]
    class_start = np.flatnonzero(np.r_[True, r2[1:] != r2[:-1]])
    for arr in (offsets, r2, weights, class_start):
        arr.flags.writeable = False
    return Stencil(offsets, r2, weights, class_start, weights[class_start])


def tail_bound(model: CouplingModel, R: int) -> float:
    """Upper bound on the coupling mass beyond distance ``R`` from one site.

    1d: sum_{|r|>R} J/r^2 <= 2 J / R (integral comparison, both directions).

    2d: sum_{|v|>R} J/|v|^4 <= 2 pi J / R^2 for every integer R >= 1.  For
    R >= 8 this follows by attaching a unit cell to each lattice point and
    comparing with the integral of 2 pi r (r - sqrt 2)^-4; below 8 the
    finitely many extra shells are checked explicitly (see the tests).  The
    constant 2 in front of the continuum value pi J / R^2 absorbs both.
    """
    if model.family is Family.NEAREST_NEIGHBOR:
        raise ValueError("nearest-neighbour couplings have no tail")
    if R < 1:
        raise ValueError("R must be a positive integer")
    if model.family is Family.LONG_RANGE_1D:
        return 2.0 * model.J / R
    return 2.0 * math.pi * model.J / (R * R)


def catalan_series(n_terms: int) -> float:
    """Partial sum ``2 sum_{j<=n} [1/(4j-3)^2 - 1/(4j-1)^2]``."""
    j = np.arange(n_terms, 0, -1, dtype=float)  # small terms first
    terms = 1.0 / (4 * j - 3) ** 2 - 1.0 / (4 * j - 1) ** 2
    return 2.0 * math.fsum(terms)


def catalan_terms_needed(tolerance: float) -> int:
    """Terms after which the alternating remainder is below ``tolerance``.

    The series is alternating in 1/(2k-1)^2 with decreasing magnitudes, so
    the remainder after n pairs is at most the first omitted term
    2/(4n+1)^2.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    n = max(1, math.ceil((math.sqrt(2.0 / tolerance) - 1.0) / 4.0))
    while 2.0 / (4 * n + 1) ** 2 >= tolerance:
        n += 1
    return n


def catalan_field(tolerance: float = 1e-9) -> float:
    """The field strength 2 sum_j [J(4j-3) - J(4j-1)] for J(r) = 1/r^2.

    Equals 2G (G Catalan's constant) to within ``tolerance``.
    """
    return catalan_series(catalan_terms_needed(tolerance))
