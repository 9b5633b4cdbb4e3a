"""Constrained rotator Hamiltonian in angle variables.

For the free (dynamical) spins of a box the energy is

    H = - sum_{pairs i<j} J(i,j) cos(theta_i - theta_j) - sum_i b_i . u(theta_i)

where ``u(theta) = (cos theta, sin theta)`` and the static field ``b_i``
collects everything that does not move: the field induced by the frozen
visible spins plus the pull of dressed spins outside the box.  Pairs of
non-moving spins only shift H by a constant and are left out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .constraint import FieldMap
from .couplings import CouplingModel
from .lattice import LatticeBox, SpinConfig, normalize_angle, unit_vectors


# --------------------------------------------------------------------------
# dressings
# --------------------------------------------------------------------------

DRESSING_KINDS = ("ME", "MW", "homogeneous", "free")


@dataclass
class Dressing:
    """Fixed spins on sites outside the box.

    Spins are stored as unit vectors so that the ME/MW pair are exact
    mirror images (x components negated bit for bit).  In constrained
    models only hidden dressing sites are used; frozen sites outside the box
    act through the visible constraint instead.
    """

    kind: str = "free"
    sites: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), dtype=np.int64), repr=False)
    vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), repr=False)
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in DRESSING_KINDS:
            raise ValueError(f"dressing kind must be one of {DRESSING_KINDS}")
        self.sites = np.asarray(self.sites, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=float).reshape(-1, 2)
        if len(self.sites) != len(self.vectors):
            raise ValueError("one vector per dressing site")

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.vectors[:, 1], self.vectors[:, 0])

    @classmethod
    def free(cls) -> Dressing:
        return cls("free")

    @classmethod
    def from_angles(cls, kind: str, sites, angles) -> Dressing:
        return cls(kind, sites, unit_vectors(normalize_angle(np.asarray(angles, dtype=float))))

    @classmethod
    def homogeneous(cls, box: LatticeBox, coupling: CouplingModel, theta: float) -> Dressing:
        """Every site within coupling range of the box set to ``theta``."""
        theta = float(normalize_angle(theta))
        sites = halo_sites(box, coupling.range)
        vec = np.repeat(unit_vectors(theta), len(sites), axis=0)
        return cls("homogeneous", sites, vec, theta)

    @classmethod
    def from_state(
        cls, kind: str, model: EnergyModel, vectors: np.ndarray, box: LatticeBox, width: int
    ) -> Dressing:
        """Restrict a state of ``model`` (on a larger box) to the halo of ``box``.

        ``vectors`` holds the free spins of ``model``; sites that are not free
        there take their angle from the model's frozen constraint.
        """
        big = model.box
        if big.half_extent < box.half_extent + width:
            raise ValueError("state box too small to cover the dressing halo")
        sites = halo_sites(box, width)
        idx = big.indices(sites)
        loc = model._local[idx]
        out = np.zeros((len(sites), 2))
        out[loc >= 0] = np.asarray(vectors)[loc[loc >= 0]]
        fixed = loc < 0
        if fixed.any():
            if model.field is None:
                raise ValueError("unconstrained model has no fixed sites")
            out[fixed] = unit_vectors(model.field.frozen_angles[idx[fixed]])
        return cls(kind, sites, out)

    def rotated(self, alpha: float) -> Dressing:
        ca, sa = math.cos(alpha), math.sin(alpha)
        c, s = self.vectors[:, 0], self.vectors[:, 1]
        vec = np.stack([ca * c - sa * s, sa * c + ca * s], axis=1)
        theta = None if self.theta is None else float(normalize_angle(self.theta + alpha))
        return Dressing(self.kind, self.sites, vec, theta)

    def flipped(self) -> Dressing:
        """Exact E/W mirror image; ME and MW swap."""
        kind = {"ME": "MW", "MW": "ME"}.get(self.kind, self.kind)
        vec = self.vectors * np.array([-1.0, 1.0])
        theta = None if self.theta is None else float(_reflect(np.array([self.theta]))[0])
        return Dressing(kind, self.sites, vec, theta)


def halo_sites(box: LatticeBox, width: int) -> np.ndarray:
    """Sites outside ``box`` within sup-distance ``width`` of it, row-major."""
    outer = box.half_extent + width
    axes = [range(-outer, outer + 1)] * box.dimension
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dimension)
    outside = np.any(np.abs(grid) > box.half_extent, axis=1)
    return grid[outside].astype(np.int64)


# --------------------------------------------------------------------------
# the compiled spin system
# --------------------------------------------------------------------------


class SpinSystem:
    """n angle variables with pair couplings and a static one-body field.

    Pairs are stored once (i < j, lexicographic) for energies and as a
    symmetric CSR adjacency for local fields.
    """

    def __init__(self, n, pair_i, pair_j, pair_w, field=None, order=None):
        self.n = int(n)
        i = np.asarray(pair_i, dtype=np.int64)
        j = np.asarray(pair_j, dtype=np.int64)
        w = np.asarray(pair_w, dtype=float)
        if np.any(i == j):
            raise ValueError("self-pairs are not allowed")
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        perm = np.lexsort((hi, lo))
        self.pair_i, self.pair_j, self.pair_w = lo[perm], hi[perm], w[perm]
        self.field = np.zeros((self.n, 2)) if field is None else np.array(field, dtype=float)
        if self.field.shape != (self.n, 2):
            raise ValueError("field must have shape (n, 2)")
        self.order = np.arange(self.n) if order is None else np.asarray(order, dtype=np.int64)
        if sorted(self.order.tolist()) != list(range(self.n)):
            raise ValueError("update order must be a permutation")

        rows = np.r_[self.pair_i, self.pair_j]
        cols = np.r_[self.pair_j, self.pair_i]
        ws = np.r_[self.pair_w, self.pair_w]
        perm = np.lexsort((cols, rows))
        self.indices = cols[perm]
        self.weights = ws[perm]
        self.indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.n), out=self.indptr[1:])

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def energy(self, theta: np.ndarray) -> float:
        """Compensated sum in a fixed order (pairs first, then fields)."""
        theta = np.asarray(theta, dtype=float)
        pair = -self.pair_w * np.cos(theta[self.pair_i] - theta[self.pair_j])
        u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        one = -np.einsum("ij,ij->i", self.field, u)
        return math.fsum(np.r_[pair, one])

    def energy_vectors(self, u: np.ndarray) -> float:
        """Energy from unit vectors (n, 2); same summation order as ``energy``."""
        u = np.asarray(u, dtype=float)
        ui, uj = u[self.pair_i], u[self.pair_j]
        pair = -self.pair_w * (ui[:, 0] * uj[:, 0] + ui[:, 1] * uj[:, 1])
        one = -(self.field[:, 0] * u[:, 0] + self.field[:, 1] * u[:, 1])
        return math.fsum(np.r_[pair, one])

    def local_field(self, theta: np.ndarray, k: int) -> np.ndarray:
        sl = slice(self.indptr[k], self.indptr[k + 1])
        nb = self.indices[sl]
        w = self.weights[sl]
        return self.field[k] + np.array([w @ np.cos(theta[nb]), w @ np.sin(theta[nb])])

    def local_fields(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        rows = np.repeat(np.arange(self.n), self.degree)
        b = self.field.copy()
        np.add.at(b[:, 0], rows, self.weights * np.cos(theta[self.indices]))
        np.add.at(b[:, 1], rows, self.weights * np.sin(theta[self.indices]))
        return b

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        """dH/dtheta_i = sum_j J_ij sin(theta_i - theta_j) - b_i . u'(theta_i)."""
        theta = np.asarray(theta, dtype=float)
        s = self.pair_w * np.sin(theta[self.pair_i] - theta[self.pair_j])
        g = np.zeros(self.n)
        np.add.at(g, self.pair_i, s)
        np.add.at(g, self.pair_j, -s)
        g += self.field[:, 0] * np.sin(theta) - self.field[:, 1] * np.cos(theta)
        return g

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        c = self.pair_w * np.cos(theta[self.pair_i] - theta[self.pair_j])
        hess = np.zeros((self.n, self.n))
        hess[self.pair_i, self.pair_j] = -c
        hess[self.pair_j, self.pair_i] = -c
        diag = np.zeros(self.n)
        np.add.at(diag, self.pair_i, c)
        np.add.at(diag, self.pair_j, c)
        diag += self.field[:, 0] * np.cos(theta) + self.field[:, 1] * np.sin(theta)
        hess[np.diag_indices(self.n)] = diag
        return hess

    def scaled(self, factor: float) -> SpinSystem:
        return SpinSystem(
            self.n, self.pair_i, self.pair_j, self.pair_w * factor, self.field * factor, self.order
        )


# --------------------------------------------------------------------------
# box-based model
# --------------------------------------------------------------------------


class EnergyModel:
    """Constrained Hamiltonian on a box.

    With a FieldMap the free spins are the hidden sites plus any released
    visible sites, and the frozen spins act through ``field.h``.  Without one
    the model is the plain (unconstrained) rotator model and every site of
    the box is free.
    """

    def __init__(
        self,
        box: LatticeBox,
        coupling: CouplingModel,
        field: FieldMap | None = None,
        dressing: Dressing | None = None,
    ):
        coupling.check_dimension(box.dimension)
        if field is not None and field.box != box:
            raise ValueError("field map lives on a different box")
        self.box = box
        self.coupling = coupling
        self.field = field
        self.dressing = dressing if dressing is not None else Dressing.free()
        self.free = field.free if field is not None else np.ones(box.n_sites, dtype=bool)
        self.free_idx = np.flatnonzero(self.free)
        self._local = np.full(box.n_sites, -1, dtype=np.int64)
        self._local[self.free_idx] = np.arange(len(self.free_idx))

    @property
    def constrained(self) -> bool:
        return self.field is not None

    @property
    def n_free(self) -> int:
        return len(self.free_idx)

    @cached_property
    def hidden_local(self) -> np.ndarray:
        """Local indices of free sites off the frozen sublattice."""
        return np.flatnonzero(~self.box.frozen[self.free_idx])

    def bulk_degree(self) -> np.ndarray:
        """Number of free neighbours each free site would have on the infinite lattice."""
        src = self.box.coords[self.free_idx]
        st = self.coupling.stencil(self.box.dimension)
        out = np.zeros(self.n_free, dtype=np.int64)
        released = {tuple(s) for s in (self.field.released if self.field else ())}
        for v in st.offsets:
            nb = src + v
            free = np.ones(len(nb), dtype=bool)
            if self.constrained:
                free = ~np.all(nb % 2 == 0, axis=1)
                for r in released:
                    free |= np.all(nb == r, axis=1)
            out += free
        return out

    def local_index(self, site: Sequence[int]) -> int:
        k = self._local[self.box.index(site)]
        if k < 0:
            raise ValueError(f"site {tuple(site)} is not free")
        return int(k)

    def with_dressing(self, dressing: Dressing) -> EnergyModel:
        return EnergyModel(self.box, self.coupling, self.field, dressing)

    @cached_property
    def system(self) -> SpinSystem:
        box, coords = self.box, self.box.coords
        st = self.coupling.stencil(box.dimension)
        src = coords[self.free_idx]

        # half stencil (first nonzero coordinate positive), clipped to the box
        off = st.offsets
        first = off[np.arange(len(off)), np.argmax(off != 0, axis=1)]
        half = (first > 0) & np.all(np.abs(off) <= 2 * box.half_extent, axis=1)
        pi, pj, pw = [], [], []
        for v, w in zip(off[half], st.weights[half]):
            dst = self._local[np.maximum(box.indices(src + v), 0)]
            ok = (box.indices(src + v) >= 0) & (dst >= 0)
            pi.append(np.flatnonzero(ok))
            pj.append(dst[ok])
            pw.append(np.full(int(ok.sum()), w))
        pi = np.concatenate(pi) if pi else np.zeros(0, dtype=np.int64)
        pj = np.concatenate(pj) if pj else np.zeros(0, dtype=np.int64)
        pw = np.concatenate(pw) if pw else np.zeros(0)

        b0 = np.zeros((self.n_free, 2))
        if self.field is not None:
            b0 += self.field.h[self.free_idx]
        b0 += self._dressing_field(src, st)

        if self.coupling.is_long_range:
            order = np.arange(self.n_free)
        else:
            parity = src.sum(axis=1) % 2
            order = np.lexsort((np.arange(self.n_free), parity))
        return SpinSystem(self.n_free, pi, pj, pw, b0, order)

    def _dressing_field(self, src: np.ndarray, st) -> np.ndarray:
        out = np.zeros((len(src), 2))
        d = self.dressing
        if len(d) == 0:
            return out
        sites, u = d.sites, d.vectors
        if sites.shape[1] != self.box.dimension:
            raise ValueError("dressing has the wrong dimension")
        if np.any(self.box.indices(sites) >= 0):
            raise ValueError("dressing sites must lie outside the box")
        if self.constrained:
            keep = ~np.all(sites % 2 == 0, axis=1)
            sites, u = sites[keep], u[keep]
        if len(sites) == 0:
            return out
        # dense lookup grid over the box plus one coupling range
        reach = self.box.half_extent + self.coupling.range
        side = 2 * reach + 1

        def flat(x):
            f = np.zeros(len(x), dtype=np.int64)
            for k in range(self.box.dimension):
                f = f * side + (x[:, k] + reach)
            return f

        inside = np.all(np.abs(sites) <= reach, axis=1)
        grid_idx = np.full(side**self.box.dimension, -1, dtype=np.int64)
        grid_idx[flat(sites[inside])] = np.flatnonzero(inside)
        for v, w in zip(st.offsets, st.weights):
            nb = src + v
            ok = np.all(np.abs(nb) <= reach, axis=1)
            hit = np.where(ok, grid_idx[np.where(ok, flat(np.where(ok[:, None], nb, 0)), 0)], -1)
            m = hit >= 0
            out[m] += w * u[hit[m]]
        return out

    # ----------------------------------------------------------------------
    # config <-> free-angle vector
    # ----------------------------------------------------------------------

    def make_config(self, free_angle: float | np.ndarray = 0.0) -> SpinConfig:
        """Config with the constraint on frozen sites and ``free_angle`` elsewhere."""
        angles = np.zeros(self.box.n_sites)
        if self.field is not None:
            fixed = ~self.free
            angles[fixed] = self.field.frozen_angles[fixed]
        angles[self.free_idx] = free_angle
        return SpinConfig(self.box, angles)

    def theta(self, config: SpinConfig) -> np.ndarray:
        self._check(config)
        return config.angles[self.free_idx].copy()

    def config_from(self, theta: np.ndarray, template: SpinConfig | None = None) -> SpinConfig:
        out = (template or self.make_config()).copy()
        out.angles[self.free_idx] = normalize_angle(np.asarray(theta, dtype=float))
        return out

    def _check(self, config: SpinConfig) -> None:
        if config.box != self.box:
            raise ValueError("config lives on a different box")
        if self.field is not None:
            fixed = ~self.free
            if not np.array_equal(config.angles[fixed], self.field.frozen_angles[fixed]):
                raise ValueError("frozen sites do not carry the constraint angles")

    # ----------------------------------------------------------------------
    # energy and derivatives
    # ----------------------------------------------------------------------

    def energy(self, config: SpinConfig) -> float:
        return self.system.energy(self.theta(config))

    def local_field(self, config: SpinConfig, site: Sequence[int]) -> np.ndarray:
        """Vector b_i with H(theta_i) = -|b_i| cos(theta_i - arg b_i) + const."""
        k = self.local_index(site)
        return self.system.local_field(self.theta(config), k)

    def gradient(self, config: SpinConfig) -> np.ndarray:
        return self.system.gradient(self.theta(config))

    def hessian(self, config: SpinConfig) -> np.ndarray:
        return self.system.hessian(self.theta(config))

    def m_ew(self, config: SpinConfig) -> float:
        """Mean horizontal component over free hidden sites."""
        t = config.angles[self.free_idx][self.hidden_local]
        return float(np.mean(np.cos(t)))


def energy(model: EnergyModel, config: SpinConfig) -> float:
    return model.energy(config)


def local_field(model: EnergyModel, config: SpinConfig, site: Sequence[int]) -> np.ndarray:
    return model.local_field(config, site)


def gradient(model: EnergyModel, config: SpinConfig) -> np.ndarray:
    return model.gradient(config)


def hessian(model: EnergyModel, config: SpinConfig) -> np.ndarray:
    return model.hessian(config)


# --------------------------------------------------------------------------
# symmetries
# --------------------------------------------------------------------------


def _reflect(theta: np.ndarray) -> np.ndarray:
    # pi - theta folded into (-pi, pi] without a wrap-around subtraction
    return np.where(theta >= 0, math.pi - theta, -math.pi - theta)


def ew_flip(config: SpinConfig) -> SpinConfig:
    """Reflect every spin about the vertical axis: E <-> W, N and S fixed."""
    return SpinConfig(config.box, _reflect(config.angles))


def global_rotate(config: SpinConfig, alpha: float) -> SpinConfig:
    return SpinConfig(config.box, normalize_angle(config.angles + alpha))


# --------------------------------------------------------------------------
# bond decomposition
# --------------------------------------------------------------------------


@dataclass
class BondDecomposition:
    """H written as a sum of two-site potentials.

    Each free site's static field is split evenly over its incident bonds:
    phi_ij(x, y) = -J_ij <x, y> - a_i . x - a_j . y with a_k = b_k / deg_k.
    """

    i: np.ndarray
    j: np.ndarray
    w: np.ndarray
    a_i: np.ndarray
    a_j: np.ndarray

    def values(self, theta: np.ndarray) -> np.ndarray:
        ui = np.stack([np.cos(theta[self.i]), np.sin(theta[self.i])], axis=1)
        uj = np.stack([np.cos(theta[self.j]), np.sin(theta[self.j])], axis=1)
        return (
            -self.w * np.einsum("ij,ij->i", ui, uj)
            - np.einsum("ij,ij->i", self.a_i, ui)
            - np.einsum("ij,ij->i", self.a_j, uj)
        )

    def bond_minima(self, grid: int = 4096) -> np.ndarray:
        """inf over unit x, y of each phi_ij.

        Minimising over y first leaves -a_i . x - |J x + a_j|, a function of
        one angle; a grid search is refined by golden-section steps.
        """
        out = np.empty(len(self.w))
        t = np.linspace(-math.pi, math.pi, grid, endpoint=False)
        for k in range(len(self.w)):
            out[k] = _min_reduced(t, self.w[k], self.a_i[k], self.a_j[k])
        return out


def _reduced(t, w, a, c):
    x = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return -(x @ a) - np.linalg.norm(w * x + c, axis=-1)


def _min_reduced(t, w, a, c) -> float:
    vals = _reduced(t, w, a, c)
    k = int(np.argmin(vals))
    step = t[1] - t[0]
    lo, hi = t[k] - step, t[k] + step
    g = (math.sqrt(5) - 1) / 2
    for _ in range(80):
        m1 = hi - g * (hi - lo)
        m2 = lo + g * (hi - lo)
        if _reduced(np.array([m1]), w, a, c)[0] < _reduced(np.array([m2]), w, a, c)[0]:
            hi = m2
        else:
            lo = m1
    return float(min(vals[k], _reduced(np.array([(lo + hi) / 2]), w, a, c)[0]))


def bond_decomposition(model: EnergyModel, bulk_only: bool = True) -> BondDecomposition:
    """Split H into bond potentials.

    With ``bulk_only`` only bonds whose two endpoints see their full
    infinite-lattice set of free neighbours are kept, so box-edge sites with
    truncated neighbourhoods do not distort the per-bond field share.
    """
    sysm = model.system
    deg = sysm.degree
    if np.any(deg == 0):
        raise ValueError("isolated free spins cannot be apportioned to bonds")
    a = sysm.field / deg[:, None]
    keep = np.ones(len(sysm.pair_w), dtype=bool)
    if bulk_only:
        full = deg == model.bulk_degree()
        keep = full[sysm.pair_i] & full[sysm.pair_j]
        if not keep.any():
            raise ValueError("box too small to contain a bulk bond")
    return BondDecomposition(
        sysm.pair_i[keep],
        sysm.pair_j[keep],
        sysm.pair_w[keep],
        a[sysm.pair_i[keep]],
        a[sysm.pair_j[keep]],
    )


def bond_minimum(model: EnergyModel, bulk_only: bool = True) -> float:
    """m = min over bonds of inf phi_ij for the even apportionment."""
    return float(np.min(bond_decomposition(model, bulk_only).bond_minima()))
