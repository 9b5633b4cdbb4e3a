"""Zero-temperature solver: exact single-site alignment sweeps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import descent_sweep
from .energy import EnergyModel, SpinSystem, ew_flip
from .lattice import SpinConfig, config_to_csv, unit_vectors


@dataclass
class GroundStateResult:
    """Outcome of a descent run.

    ``vectors`` holds the free spins as unit vectors in the model's local
    order; ``config`` is the full SpinConfig (or a bare angle array when the
    solver ran on a SpinSystem).
    """

    config: SpinConfig | np.ndarray
    energy: float
    gradient_norm: float
    m_ew: float
    sweeps: int
    converged: bool
    vectors: np.ndarray = field(repr=False)
    degenerate: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.converged and not self.flags

    @property
    def theta(self) -> np.ndarray:
        return np.arctan2(self.vectors[:, 1], self.vectors[:, 0])

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "gradientNorm": self.gradient_norm,
            "mEW": self.m_ew,
            "sweeps": self.sweeps,
            "converged": self.converged,
            "degenerateSites": len(self.degenerate),
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        if not isinstance(self.config, SpinConfig):
            raise TypeError("CSV export needs a box-based result")
        return config_to_csv(self.config)


def _system_of(model):
    return model if isinstance(model, SpinSystem) else model.system


def _initial_vectors(model, init) -> np.ndarray:
    if isinstance(model, SpinSystem):
        theta = np.asarray(init, dtype=float).reshape(-1)
        if theta.shape != (model.n,):
            raise ValueError("init must hold one angle per spin")
        return unit_vectors(theta)
    return unit_vectors(model.theta(init))


def descend(
    system: SpinSystem,
    vectors: np.ndarray,
    tol: float = 1e-11,
    max_sweeps: int = 100_000,
) -> tuple[np.ndarray, int, bool, np.ndarray, list]:
    """Sweep until the largest angle change drops below ``tol``.

    Returns (vectors, sweeps that moved spins, converged, degenerate mask,
    flags).  The energy is checked after every sweep and must not rise.
    """
    if not tol > 0 or max_sweeps < 1:
        raise ValueError("tol must be positive and max_sweeps at least 1")
    c = np.ascontiguousarray(vectors[:, 0], dtype=float).copy()
    s = np.ascontiguousarray(vectors[:, 1], dtype=float).copy()
    fx = np.ascontiguousarray(system.field[:, 0])
    fy = np.ascontiguousarray(system.field[:, 1])
    degenerate = np.zeros(system.n, dtype=np.bool_)
    flags = []
    energy = system.energy_vectors(np.stack([c, s], axis=1))
    sweeps, converged = 0, False
    while sweeps < max_sweeps:
        change = descent_sweep(
            c, s, system.indptr, system.indices, system.weights, fx, fy, system.order, degenerate
        )
        new = system.energy_vectors(np.stack([c, s], axis=1))
        if new > energy + 1e-12 * max(1.0, abs(energy)):
            flags.append("energy increased during a sweep")
        energy = new
        if change < tol:
            converged = True
            break
        sweeps += 1
    if not converged:
        flags.append(f"no convergence within {max_sweeps} sweeps")
    if degenerate.any():
        flags.append("vanishing local field on some sites")
    return np.stack([c, s], axis=1), sweeps, converged, degenerate, flags


def coordinate_descent(
    model: EnergyModel | SpinSystem,
    init: SpinConfig | np.ndarray,
    tol: float = 1e-11,
    max_sweeps: int = 100_000,
) -> GroundStateResult:
    """Minimise H by aligning each free spin with its local field in turn.

    Every update is the exact minimiser in that coordinate, so the energy
    never increases.  Non-convergence is reported via ``flags``.
    """
    return _finish(model, _initial_vectors(model, init), init, tol, max_sweeps)


GRADIENT_TOL = 1e-8


def _finish(model, u0, template, tol, max_sweeps) -> GroundStateResult:
    system = _system_of(model)
    u, sweeps, converged, degenerate, flags = descend(system, u0, tol, max_sweeps)
    theta = np.arctan2(u[:, 1], u[:, 0])
    grad = system.gradient(theta)
    gnorm = float(np.max(np.abs(grad))) if len(grad) else 0.0
    if converged and gnorm >= GRADIENT_TOL:
        flags.append("gradient not small at the end point")
    if isinstance(model, SpinSystem):
        config = theta
        m_ew = float(np.mean(u[:, 0])) if len(u) else 0.0
        deg_sites = np.flatnonzero(degenerate).tolist()
    else:
        config = model.config_from(theta, template if isinstance(template, SpinConfig) else None)
        hidden = model.hidden_local
        m_ew = float(np.sum(u[hidden, 0]) / len(hidden)) if len(hidden) else 0.0
        deg_sites = [model.box.site(model.free_idx[k]) for k in np.flatnonzero(degenerate)]
    return GroundStateResult(
        config=config,
        energy=system.energy_vectors(u),
        gradient_norm=gnorm,
        m_ew=m_ew,
        sweeps=sweeps,
        converged=converged,
        vectors=u,
        degenerate=deg_sites,
        flags=flags,
    )


def aligned_vectors(n: int, theta: float) -> np.ndarray:
    return np.repeat(unit_vectors(theta), n, axis=0)


def ground_pair(
    model: EnergyModel, tol: float = 1e-11, max_sweeps: int = 100_000
) -> tuple[GroundStateResult, GroundStateResult]:
    """The mostly-East and mostly-West minimisers.

    Descent starts from all-E and from its exact mirror all-W with the same
    update order, so the two runs are mirror images step by step.
    """
    n = model.n_free
    u_e = aligned_vectors(n, 0.0)
    u_w = u_e * np.array([-1.0, 1.0])
    me = _finish(model, u_e, None, tol, max_sweeps)
    mw = _finish(model, u_w, None, tol, max_sweeps)

    diag = {
        "energyRelDiff": abs(me.energy - mw.energy) / max(abs(me.energy), 1e-300),
        "mEWSum": abs(me.m_ew + mw.m_ew),
        "flipMaxDev": float(
            np.max(np.abs(_wrap(ew_flip(me.config).angles - mw.config.angles)))
        ),
    }
    problems = []
    if diag["energyRelDiff"] >= 1e-8:
        problems.append("ME and MW energies differ")
    if diag["mEWSum"] >= 1e-6:
        problems.append("mEW values are not opposite")
    if not me.m_ew > 0:
        problems.append("East start did not end with positive mEW")
    if diag["flipMaxDev"] >= max(tol, 1e-10) * 10:
        problems.append("configs are not ew_flip images")
    for r in (me, mw):
        r.diagnostics = dict(diag)
        r.flags.extend(problems)
    return me, mw


def _wrap(x: np.ndarray) -> np.ndarray:
    return (x + math.pi) % (2 * math.pi) - math.pi


@dataclass
class MultistartReport:
    results: list
    basins: dict

    @property
    def best(self) -> GroundStateResult:
        return min(self.results, key=lambda r: r.energy)


def multistart(
    model: EnergyModel,
    n_starts: int = 8,
    seed: int = 0,
    tol: float = 1e-11,
    max_sweeps: int = 100_000,
    energy_tol: float = 1e-8,
) -> MultistartReport:
    """Descent from random initial states; groups the end points.

    A basin is keyed by the sign of mEW and the energy rounded relative to
    the lowest one found.
    """
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(n_starts):
        theta = rng.uniform(-math.pi, math.pi, model.n_free)
        results.append(_finish(model, unit_vectors(theta), None, tol, max_sweeps))
    e0 = min(r.energy for r in results)
    basins: dict = {}
    for r in results:
        ground = abs(r.energy - e0) <= energy_tol * max(1.0, abs(e0))
        label = ("ME" if r.m_ew > 0 else "MW") if ground else "metastable"
        basins[label] = basins.get(label, 0) + 1
    return MultistartReport(results, basins)
