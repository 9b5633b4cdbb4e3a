"""Single-site Metropolis sampling of the constrained model.

Randomness is drawn in fixed-size chunks of sweeps from a numpy Generator,
so a given seed yields the same trajectory regardless of how the work is
scheduled.  A chain can run *mirrored*: every proposal angle is negated,
which, together with an E/W-mirrored start and dressing, reproduces the
exact mirror image of the unmirrored trajectory.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._kernels import metropolis_chunk
from .energy import Dressing, EnergyModel, SpinSystem
from .groundstate import descend
from .lattice import SpinConfig, unit_vectors

OBSERVABLES = ("sigma1_origin", "mEW_density", "energy_density")
MIN_EFFECTIVE = 100
CHUNK = 256


@dataclass
class McParams:
    """Metropolis run parameters; ``proposal_width`` in radians."""

    beta: float
    sweeps: int = 10_000
    burnin: int = 1_000
    seed: int = 0
    proposal_width: float = 1.0
    adapt: bool = True
    target_acceptance: float = 0.5

    def __post_init__(self):
        if not self.beta >= 0 or not math.isfinite(self.beta):
            raise ValueError("beta must be a finite number >= 0")
        if self.sweeps < 1:
            raise ValueError("sweeps must be positive")
        if self.burnin < 0:
            raise ValueError("burnin must be >= 0")
        if not 0 < self.proposal_width <= math.pi:
            raise ValueError("proposal_width must lie in (0, pi]")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SampleStats:
    mean: float
    stderr: float
    autocorr_time: float
    n_effective: float
    n_samples: int
    flags: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.flags)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "autocorrTime": self.autocorr_time,
            "nEffective": self.n_effective,
            "nSamples": self.n_samples,
            "flags": list(self.flags),
        }


# --------------------------------------------------------------------------
# error analysis
# --------------------------------------------------------------------------


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation function via zero-padded FFT."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    y = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n]
    if acf[0] == 0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    return acf / acf[0]


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """tau_int = 1/2 + sum_t rho(t), summed up to the first window W >= c tau(W).

    Convention: tau = 1/2 for uncorrelated data, so n_eff = n / (2 tau).
    """
    rho = autocorrelation(x)
    tau = 0.5
    for w in range(1, len(rho)):
        tau += rho[w]
        if w >= c * tau:
            break
    return max(float(tau), 0.5)


def batch_stderr(x: np.ndarray, batch: int) -> tuple[float, int]:
    """Standard error of the mean from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    nb = len(x) // batch
    if nb < 2:
        return float("nan"), nb
    means = x[: nb * batch].reshape(nb, batch).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(nb)), nb


def sample_stats(x: np.ndarray) -> SampleStats:
    """Mean with autocorrelation-aware error bar (batches of >= 5 tau)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    flags = []
    if n < 2:
        return SampleStats(float(np.mean(x)) if n else float("nan"), float("nan"), float("nan"), 0.0, n, ["too few samples"])
    tau = integrated_autocorr_time(x)
    batch = max(1, math.ceil(5 * tau))
    err, nb = batch_stderr(x, batch)
    if nb < 10:
        flags.append(f"only {nb} batches")
    n_eff = n / (2 * tau)
    if n_eff < MIN_EFFECTIVE:
        flags.append(f"insufficient effective samples ({n_eff:.1f} < {MIN_EFFECTIVE})")
    return SampleStats(float(np.mean(x)), err, tau, float(n_eff), n, flags)


# --------------------------------------------------------------------------
# chains
# --------------------------------------------------------------------------


@dataclass
class ChainResult:
    """Measurement streams (burn-in removed) and final state."""

    probe: np.ndarray
    m_ew: np.ndarray
    energy: np.ndarray
    vectors: np.ndarray
    acceptance: float
    proposal_width: float
    n_free: int

    def stream(self, observable: str) -> np.ndarray:
        if observable == "sigma1_origin":
            return self.probe
        if observable == "mEW_density":
            return self.m_ew
        if observable == "energy_density":
            return self.energy / self.n_free
        raise ValueError(f"unknown observable {observable!r}; choose from {OBSERVABLES}")

    def stats(self, observable: str) -> SampleStats:
        return sample_stats(self.stream(observable))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class Chain:
    """One Metropolis chain owning its spins and RNG.

    ``model`` is an EnergyModel or a bare SpinSystem.  ``init`` may be a
    SpinConfig, an (n_free, 2) array of unit vectors, or a single angle for
    an aligned start.  ``probe`` is a site (EnergyModel) or local index
    (SpinSystem) whose cos is recorded every sweep.
    """

    def __init__(
        self,
        model: EnergyModel | SpinSystem,
        params: McParams,
        init=math.pi / 2,
        *,
        probe=None,
        mirrored: bool = False,
        seed=None,
    ):
        self.params = params
        self.mirrored = mirrored
        if isinstance(model, SpinSystem):
            self.system = model
            self.hidden = np.arange(model.n, dtype=np.int64)
            self.probe = -1 if probe is None else int(probe)
        else:
            self.system = model.system
            self.hidden = np.asarray(model.hidden_local, dtype=np.int64)
            self.probe = -1 if probe is None else model.local_index(probe)
        n = self.system.n
        if isinstance(init, SpinConfig):
            u = unit_vectors(model.theta(init))
        elif np.ndim(init) == 0:
            u = np.repeat(unit_vectors(float(init)), n, axis=0)
        else:
            u = np.array(init, dtype=float).reshape(n, 2)
        self.c = np.ascontiguousarray(u[:, 0]).copy()
        self.s = np.ascontiguousarray(u[:, 1]).copy()
        self.rng = _rng(params.seed if seed is None else seed)
        self.width = float(params.proposal_width)
        self.energy = self.system.energy_vectors(self.vectors)
        self._fx = np.ascontiguousarray(self.system.field[:, 0])
        self._fy = np.ascontiguousarray(self.system.field[:, 1])

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([self.c, self.s], axis=1)

    def _chunk(self, sweeps: int):
        n = self.system.n
        delta = self.rng.uniform(-1.0, 1.0, (sweeps, n)) * self.width
        uniforms = self.rng.random((sweeps, n))
        cosd = np.cos(delta)
        sind = np.sin(delta)
        if self.mirrored:
            sind = -sind
        out_p = np.empty(sweeps)
        out_m = np.empty(sweeps)
        out_e = np.empty(sweeps)
        acc, self.energy = metropolis_chunk(
            self.c, self.s, self.system.indptr, self.system.indices, self.system.weights,
            self._fx, self._fy, self.system.order, float(self.params.beta),
            cosd, sind, uniforms, self.hidden, self.probe, self.energy,
            out_p, out_m, out_e,
        )
        return acc / max(1, sweeps * n), out_p, out_m, out_e

    def burn_in(self) -> None:
        left = self.params.burnin
        while left > 0:
            k = min(CHUNK, left)
            acc, *_ = self._chunk(k)
            left -= k
            if self.params.adapt:
                # multiplicative Robbins-Monro style step, burn-in only
                self.width = float(
                    np.clip(self.width * math.exp(acc - self.params.target_acceptance), 1e-3, math.pi)
                )

    def measure(self, sweeps: int | None = None) -> ChainResult:
        total = self.params.sweeps if sweeps is None else sweeps
        probe, mew, energy, accs = [], [], [], []
        left = total
        while left > 0:
            k = min(CHUNK, left)
            acc, p, m, e = self._chunk(k)
            probe.append(p)
            mew.append(m)
            energy.append(e)
            accs.append(acc * k)
            left -= k
        return ChainResult(
            np.concatenate(probe),
            np.concatenate(mew),
            np.concatenate(energy),
            self.vectors,
            float(sum(accs) / total),
            self.width,
            self.system.n,
        )

    def run(self) -> ChainResult:
        self.burn_in()
        return self.measure()


def metropolis_sweep(
    model: EnergyModel,
    config: SpinConfig,
    params: McParams,
    rng: np.random.Generator,
) -> tuple[SpinConfig, float]:
    """One Metropolis sweep over the free spins; returns (config, acceptance)."""
    chain = Chain(model, params, init=config, seed=rng)
    acc, *_ = chain._chunk(1)
    theta = np.arctan2(chain.s, chain.c)
    return model.config_from(theta, config), acc


def ground_start(model: EnergyModel | SpinSystem, theta0: float = 0.0) -> np.ndarray:
    """Unit vectors of the descent end point from the aligned state ``theta0``.

    Starting in the basin selected by the dressing avoids long-lived vortex
    states that a symmetric start can nucleate at low temperature.
    """
    system = model if isinstance(model, SpinSystem) else model.system
    return descend(system, np.repeat(unit_vectors(theta0), system.n, axis=0))[0]


def default_start(model: EnergyModel) -> np.ndarray:
    """Ground start from E, or from W (the exact mirror) under an MW dressing."""
    u = ground_start(model.with_dressing(model.dressing.flipped()) if model.dressing.kind == "MW" else model)
    return u * np.array([-1.0, 1.0]) if model.dressing.kind == "MW" else u


def sample_observable(
    model: EnergyModel,
    dressing: Dressing | None,
    params: McParams,
    observable: str,
    init=None,
) -> SampleStats:
    """Run one chain under ``dressing`` and summarise ``observable``.

    ``sigma1_origin`` needs the origin among the free sites, i.e. a field
    map built with the visible origin released.  Without ``init`` the chain
    starts from ``default_start``.
    """
    if observable not in OBSERVABLES:
        raise ValueError(f"unknown observable {observable!r}; choose from {OBSERVABLES}")
    if dressing is not None:
        model = model.with_dressing(dressing)
    probe = None
    if observable == "sigma1_origin":
        origin = model.box.origin
        if not model.free[model.box.index(origin)]:
            raise ValueError("the origin is frozen; release it to measure sigma1_origin")
        probe = origin
    if init is None:
        init = default_start(model)
    return Chain(model, params, init, probe=probe).run().stats(observable)
