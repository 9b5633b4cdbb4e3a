"""Headline experiments built from the solver and the sampler.

* ``discontinuity_gap``: ME- versus MW-dressed conditional mean of the
  horizontal component of the released visible origin spin.
* ``spinflop_histogram``: pooled distribution of the horizontal
  magnetisation of the hidden spins.
* ``spectral_gap_contrast``: smallest Hessian eigenvalue with and without
  the visible constraint.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .constraint import effective_field
from .couplings import CouplingModel, Family
from .energy import Dressing, EnergyModel
from .groundstate import ground_pair
from .lattice import build_box
from .sampler import Chain, McParams, SampleStats, ground_start, sample_stats

INITS = ("north", "ground")


def _round_up4(x: int) -> int:
    return 4 * math.ceil(x / 4)


def dressing_margin(coupling: CouplingModel) -> int:
    """Extra half-extent of the box whose ground state supplies the dressing."""
    return 8 if not coupling.is_long_range else max(8, _round_up4(coupling.range))


def ground_dressings(
    coupling: CouplingModel, dimension: int, radius: int
) -> tuple[Dressing, Dressing, dict]:
    """ME and MW dressings for a box of half-extent ``radius``.

    The ground pair of a constrained box ``radius + margin`` is restricted
    to the coupling-range halo around the inner box.  MW is built as the
    exact mirror of ME.
    """
    big = build_box(dimension, radius + dressing_margin(coupling))
    model = EnergyModel(big, coupling, effective_field(big, coupling))
    me, mw = ground_pair(model)
    inner = build_box(dimension, radius)
    d_me = Dressing.from_state("ME", model, me.vectors, inner, coupling.range)
    info = {"groundEnergy": me.energy, "groundMEW": me.m_ew, "flags": list(me.flags)}
    return d_me, d_me.flipped(), info


def released_model(coupling: CouplingModel, dimension: int, radius: int) -> EnergyModel:
    box = build_box(dimension, radius)
    fm = effective_field(box, coupling, released=[box.origin])
    return EnergyModel(box, coupling, fm)


# --------------------------------------------------------------------------
# discontinuity gap
# --------------------------------------------------------------------------


@dataclass
class GapCell:
    """One (beta, radius) measurement."""

    beta: float
    radius: int
    me: SampleStats
    mw: SampleStats
    gap: float
    gap_stderr: float
    seed: list
    init: str
    flags: list = field(default_factory=list)

    def row(self) -> dict:
        return {
            "beta": self.beta,
            "radius": self.radius,
            "mean_ME": self.me.mean,
            "stderr_ME": self.me.stderr,
            "mean_MW": self.mw.mean,
            "stderr_MW": self.mw.stderr,
            "gap": self.gap,
            "gap_stderr": self.gap_stderr,
            "tau": self.me.autocorr_time,
            "n_eff": self.me.n_effective,
            "init": self.init,
            "flags": ";".join(self.flags),
        }


@dataclass
class ProbeResult:
    beta: float
    radii: list
    gaps: list
    stderrs: list
    verdict: str
    delta: float
    cells: list = field(repr=False)
    slope: float = float("nan")
    slope_stderr: float = float("nan")

    @property
    def exceeds_delta_everywhere(self) -> bool:
        return all(g - 3 * e > self.delta for g, e in zip(self.gaps, self.stderrs))

    @property
    def consistent_with_zero(self) -> list:
        return [abs(g) <= 3 * e for g, e in zip(self.gaps, self.stderrs)]

    @property
    def trends_to_zero(self) -> bool:
        """Gap decreasing in radius with 3-sigma significance."""
        return bool(self.slope + 3 * self.slope_stderr < 0)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "radii": list(self.radii),
            "gaps": list(self.gaps),
            "stderrs": list(self.stderrs),
            "verdict": self.verdict,
            "delta": self.delta,
            "exceedsDeltaAtAllRadii": self.exceeds_delta_everywhere,
            "consistentWithZero": self.consistent_with_zero,
            "slope": self.slope,
            "slopeStderr": self.slope_stderr,
            "seeds": [c.seed for c in self.cells],
            "flags": sorted({f for c in self.cells for f in c.flags}),
        }


def verdict(gap: float, stderr: float, delta: float) -> str:
    if gap - 3 * stderr > delta:
        return "gap persists"
    if gap + 3 * stderr < delta:
        return "gap vanishes"
    return "inconclusive"


def _weighted_slope(x, y, err) -> tuple[float, float]:
    x, y, err = (np.asarray(a, dtype=float) for a in (x, y, err))
    if len(x) < 2 or not np.all(err > 0):
        return float("nan"), float("nan")
    w = 1.0 / err**2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * y) / sxx
    return float(slope), float(1.0 / math.sqrt(sxx))


def _run_cell(model, d_me, d_mw, params, beta, seed_seq, init, paired, ground_init):
    p = replace(params, beta=beta)
    m_me = model.with_dressing(d_me)
    m_mw = model.with_dressing(d_mw)
    if init == "ground":
        u_me = ground_init
    else:
        u_me = np.repeat([[0.0, 1.0]], model.n_free, axis=0)
    u_mw = u_me * np.array([-1.0, 1.0])
    origin = model.box.origin
    s_me, s_mw = seed_seq.spawn(2)
    rng_me = np.random.default_rng(s_me)
    rng_mw = np.random.default_rng(s_me if paired else s_mw)
    r_me = Chain(m_me, p, u_me, probe=origin, seed=rng_me).run()
    r_mw = Chain(m_mw, p, u_mw, probe=origin, mirrored=paired, seed=rng_mw).run()
    st_me = sample_stats(r_me.probe)
    st_mw = sample_stats(r_mw.probe)
    if paired:
        diff = sample_stats(r_me.probe - r_mw.probe)
        gap, err = diff.mean, diff.stderr
    else:
        gap = st_me.mean - st_mw.mean
        err = math.hypot(st_me.stderr, st_mw.stderr)
    flags = sorted(set(st_me.flags) | set(st_mw.flags))
    return GapCell(
        beta, model.box.half_extent, st_me, st_mw, gap, err,
        [int(e) for e in np.atleast_1d(seed_seq.entropy)], init, flags,
    )


def discontinuity_gap(
    family: str | Family,
    J: float,
    betas: Sequence[float],
    radii: Sequence[int],
    params: McParams,
    delta: float = 0.2,
    *,
    dimension: int = 2,
    truncation_radius: int = 64,
    threads: int = 1,
    init: str = "ground",
    paired: bool = True,
) -> list[ProbeResult]:
    """ME/MW gap of the visible-origin horizontal component, per beta.

    Every (beta, radius) cell uses a box of half-extent ``radius`` with the
    visible origin released, frozen visible spins elsewhere and the hidden
    spins outside the box fixed to the ME (resp. MW) ground state.  With
    ``paired`` the MW chain replays the ME random numbers with mirrored
    proposals, so the two estimates are exact mirror images and the gap
    error comes from a single stream.  Cell seeds derive from
    ``(params.seed, cell index)``, so the thread count does not change
    results.  ``init="ground"`` starts the ME chain at the descent end point
    of the dressed box (the MW chain at its mirror image); ``"north"``
    starts both at the flip-symmetric all-North state.
    """
    radii = [int(r) for r in radii]
    if any(r % 4 or r <= 0 for r in radii):
        raise ValueError("annulus radii must be positive multiples of 4")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("annulus radii must be increasing")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if init not in INITS:
        raise ValueError(f"init must be one of {INITS}")
    coupling = CouplingModel(family, J, truncation_radius)
    coupling.check_dimension(dimension)

    setups = {}
    for r in radii:
        model = released_model(coupling, dimension, r)
        d_me, d_mw, _ = ground_dressings(coupling, dimension, r)
        ground = None
        if init == "ground":
            ground = ground_start(model.with_dressing(d_me))
        setups[r] = (model, d_me, d_mw, ground)

    jobs = []
    for bi, beta in enumerate(betas):
        for ri, r in enumerate(radii):
            ss = np.random.SeedSequence([int(params.seed), bi * len(radii) + ri])
            model, d_me, d_mw, ground = setups[r]
            jobs.append((model, d_me, d_mw, params, float(beta), ss, init, paired, ground))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(lambda a: _run_cell(*a), jobs))
    else:
        cells = [_run_cell(*a) for a in jobs]

    results = []
    for bi, beta in enumerate(betas):
        mine = cells[bi * len(radii) : (bi + 1) * len(radii)]
        gaps = [c.gap for c in mine]
        errs = [c.gap_stderr for c in mine]
        slope, slope_err = _weighted_slope(radii, gaps, errs)
        results.append(
            ProbeResult(
                float(beta), radii, gaps, errs, verdict(gaps[-1], errs[-1], delta), delta,
                mine, slope, slope_err,
            )
        )
    return results


# --------------------------------------------------------------------------
# spin-flop histogram
# --------------------------------------------------------------------------


def mirror_bins(bins: int) -> np.ndarray:
    """Bin edges on [-1, 1], mirror symmetric bit for bit; ``bins`` odd."""
    if bins < 3 or bins % 2 == 0:
        raise ValueError("bins must be an odd integer >= 3")
    half = (2 * np.arange(bins // 2 + 1) + 1) / bins
    return np.concatenate([-half[::-1], half])


def mirror_histogram(x: np.ndarray, bins: int) -> np.ndarray:
    """Counts on ``mirror_bins``; a bin is closed on its side nearer zero.

    The bin of ``x`` depends only on ``|x|`` and the sign of ``x``, so
    negating the data reverses the counts exactly.
    """
    x = np.asarray(x, dtype=float)
    half = mirror_bins(bins)[bins // 2 + 1 :]
    k = np.minimum(np.searchsorted(half, np.abs(x), side="left"), bins // 2)
    idx = bins // 2 + np.sign(x).astype(np.int64) * k
    return np.bincount(idx, minlength=bins)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    stderr: float
    chain_means: list
    bimodal: bool
    modes: tuple

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def to_dict(self) -> dict:
        return {
            "bins": len(self.counts),
            "mean": self.mean,
            "stderr": self.stderr,
            "bimodal": self.bimodal,
            "modes": list(self.modes),
            "chainMeans": list(self.chain_means),
        }


def classify_modes(counts: np.ndarray, centers: np.ndarray, dip_ratio: float = 0.5):
    """(bimodal, modes): two peaks of opposite sign separated by a dip."""
    c = len(counts) // 2
    left = int(np.argmax(counts[:c]))
    right = c + 1 + int(np.argmax(counts[c + 1 :]))
    lo = min(counts[left], counts[right])
    dip = counts[left : right + 1].min()
    if lo > 0 and dip < dip_ratio * lo:
        return True, (float(centers[left]), float(centers[right]))
    return False, (float(centers[int(np.argmax(counts))]),)


def spinflop_histogram(
    model: EnergyModel,
    beta: float,
    params: McParams,
    *,
    chains: int = 16,
    bins: int = 41,
    threads: int = 1,
) -> Histogram:
    """Pooled mEW histogram from ``chains`` runs started at random angles."""
    p = replace(params, beta=beta)
    seeds = np.random.SeedSequence(int(params.seed)).spawn(chains)

    def one(ss):
        rng = np.random.default_rng(ss)
        theta = rng.uniform(-math.pi, math.pi, model.n_free)
        u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return Chain(model, p, u, seed=rng).run().m_ew

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            streams = list(pool.map(one, seeds))
    else:
        streams = [one(ss) for ss in seeds]
    pooled = np.concatenate(streams)
    counts = mirror_histogram(pooled, bins)
    edges = mirror_bins(bins)
    means = [float(np.mean(s)) for s in streams]
    err = float(np.std(means, ddof=1) / math.sqrt(chains)) if chains > 1 else float("nan")
    bimodal, modes = classify_modes(counts, 0.5 * (edges[1:] + edges[:-1]))
    return Histogram(edges, counts, float(np.mean(pooled)), err, means, bimodal, modes)


# --------------------------------------------------------------------------
# spectral gap
# --------------------------------------------------------------------------


@dataclass
class SpectralContrast:
    lambda_min_constrained: float
    lambda_min_unconstrained: float
    zero_mode: np.ndarray = field(repr=False)

    @property
    def zero_mode_uniform(self) -> bool:
        v = self.zero_mode * np.sign(self.zero_mode.sum())
        return bool(np.all(v > 0) and np.var(v * math.sqrt(len(v))) < 1e-8)

    def to_dict(self) -> dict:
        return {
            "lambdaMinConstrained": self.lambda_min_constrained,
            "lambdaMinUnconstrained": self.lambda_min_unconstrained,
            "zeroModeUniform": self.zero_mode_uniform,
        }


def spectral_gap_contrast(
    J: float, L: int, family: str | Family = "nn", dimension: int = 2, truncation_radius: int = 64
) -> SpectralContrast:
    """Smallest Hessian eigenvalue, constrained ME ground state vs aligned free XY."""
    box = build_box(dimension, L)
    coupling = CouplingModel(family, J, truncation_radius)
    constrained = EnergyModel(box, coupling, effective_field(box, coupling))
    me, _ = ground_pair(constrained)
    lam_c = float(np.linalg.eigvalsh(constrained.hessian(me.config))[0])

    free = EnergyModel(box, coupling)
    w, v = np.linalg.eigh(free.hessian(free.make_config(0.0)))
    return SpectralContrast(lam_c, float(w[0]), v[:, 0])
