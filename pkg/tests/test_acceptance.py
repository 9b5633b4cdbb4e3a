"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; conftest prints them at the end of
the run.  ``python tests/test_acceptance.py`` runs them without pytest.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from spinflop.cli import main as cli_main
from spinflop.constraint import effective_field, site_field
from spinflop.couplings import CATALAN, CouplingModel, tail_bound
from spinflop.energy import Dressing, EnergyModel, SpinSystem, ew_flip
from spinflop.groundstate import ground_pair
from spinflop.lattice import SiteClass, build_box
from spinflop.probes import (
    discontinuity_gap,
    ground_dressings,
    mirror_histogram,
    released_model,
    spectral_gap_contrast,
)
from spinflop.sampler import Chain, McParams, default_start, sample_stats

RESULTS: dict[int, tuple[bool, str]] = {}

# regression anchors pinned from the first acceptance run
LAMBDA_MIN_NN_L8 = 0.12131359918283964
GAP_BETA5 = {8: 1.8757370675962728, 12: 1.8766087134321139, 16: 1.8799171547607345}
GAP_PIN_TOL = 1e-9


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def test_criterion_1_catalan_lattice_sum():
    t0 = time.perf_counter()
    R = 10**6
    model = CouplingModel("lr1d", 1.0, R)
    h = site_field(model, (1,))
    dt = time.perf_counter() - t0
    diff = abs(h[1] - 2 * CATALAN)
    bound = tail_bound(model, R)
    record(
        1,
        diff <= bound and h[0] == 0.0 and dt < 1.0,
        f"lattice field {h[1]:.10f} vs 2G {2 * CATALAN:.10f}: |diff| {diff:.3e} "
        f"(bound {bound:.1e}), {dt:.2f}s",
    )


def test_criterion_2_exact_nn_field_pattern():
    box = build_box(2, 8)
    fm = effective_field(box, CouplingModel("nn", 1.0))
    bad = []
    for k in np.flatnonzero(~box.frozen):
        cls = int(fm.site_class[k])
        want = {SiteClass.TYPE1: 2.0, SiteClass.TYPE2: -2.0}.get(cls, 0.0)
        if not (fm.h[k, 0] == 0.0 and fm.h[k, 1] == want):
            bad.append((box.site(k), cls, tuple(fm.h[k])))
    zeros = np.isin(fm.site_class, [3, 6, 7])
    exact = bool(np.all(fm.h[zeros] == 0.0))
    record(2, not bad and exact, f"{int((~box.frozen).sum())} hidden sites, {len(bad)} mismatches")


def test_criterion_3_zero_temperature_spin_flop():
    t0 = time.perf_counter()
    box = build_box(2, 8)
    c = CouplingModel("nn", 1.0)
    me, mw = ground_pair(EnergyModel(box, c, effective_field(box, c)))
    dt = time.perf_counter() - t0
    rel = abs(me.energy - mw.energy) / abs(me.energy)
    flip = float(np.max(np.abs(ew_flip(me.config).angles - mw.config.angles)))
    ok = rel < 1e-8 and abs(me.m_ew + mw.m_ew) < 1e-6 and abs(me.m_ew) > 0.05 and flip < 1e-12 and dt < 10
    record(
        3,
        ok,
        f"E {me.energy:.10f}/{mw.energy:.10f}, mEW {me.m_ew:+.6f}/{mw.m_ew:+.6f}, "
        f"flip dev {flip:.1e}, {dt:.2f}s",
    )


def _fd_check(model, rng, n_configs):
    sysm = model.system
    h = 1e-5
    worst_g = worst_h = 0.0
    eye = np.eye(sysm.n)
    for _ in range(n_configs):
        theta = rng.uniform(-math.pi, math.pi, sysm.n)
        g = sysm.gradient(theta)
        fd = np.array(
            [(sysm.energy(theta + h * eye[k]) - sysm.energy(theta - h * eye[k])) / (2 * h) for k in range(sysm.n)]
        )
        worst_g = max(worst_g, np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd))))
        H = sysm.hessian(theta)
        fdh = np.stack(
            [(sysm.gradient(theta + h * eye[k]) - sysm.gradient(theta - h * eye[k])) / (2 * h) for k in range(sysm.n)],
            axis=1,
        )
        worst_h = max(worst_h, np.max(np.abs(H - fdh)) / max(1.0, np.max(np.abs(fdh))))
    return worst_g, worst_h


def test_criterion_4_gradient_and_hessian():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cases = [("nn", 2, 8, 1), ("lr1d", 1, 16, 16), ("lr2d", 2, 4, 6)]
    parts, ok = [], True
    for fam, dim, L, R in cases:
        box = build_box(dim, L)
        c = CouplingModel(fam, 1.0, R)
        model = EnergyModel(box, c, effective_field(box, c), Dressing.homogeneous(box, c, 0.3))
        g, h = _fd_check(model, rng, 50)
        ok &= g < 1e-6 and h < 1e-5
        parts.append(f"{fam} grad {g:.1e} hess {h:.1e}")
    dt = time.perf_counter() - t0
    record(4, ok and dt < 60, ", ".join(parts) + f", {dt:.1f}s")


def test_criterion_5_zero_mode_contrast():
    t0 = time.perf_counter()
    s = spectral_gap_contrast(1.0, 8)
    dt = time.perf_counter() - t0
    v = s.zero_mode * np.sign(s.zero_mode.sum())
    ok = (
        abs(s.lambda_min_unconstrained) < 1e-10
        and s.zero_mode_uniform
        and np.var(v * math.sqrt(len(v))) < 1e-8
        and s.lambda_min_constrained > 0
        and s.lambda_min_constrained == pytest.approx(LAMBDA_MIN_NN_L8, rel=1e-8)
        and dt < 60
    )
    record(
        5,
        ok,
        f"lambda_min unconstrained {s.lambda_min_unconstrained:.1e}, "
        f"constrained {s.lambda_min_constrained:.10f} (pinned {LAMBDA_MIN_NN_L8:.10f}), {dt:.1f}s",
    )


def test_criterion_6_single_spin_oracle():
    t0 = time.perf_counter()
    parts, ok = [], True
    for beta in (0.5, 2.0):
        sysm = SpinSystem(1, [], [], [], field=[[0.0, 2.0]])
        res = Chain(sysm, McParams(beta=beta, sweeps=100_000, burnin=2_000, seed=6), 0.0).run()
        st = sample_stats(-res.energy / 2.0)
        w = lambda t: math.exp(2 * beta * math.sin(t))  # noqa: E731
        exact = integrate.quad(lambda t: math.sin(t) * w(t), -math.pi, math.pi)[0] / integrate.quad(
            w, -math.pi, math.pi
        )[0]
        z = abs(st.mean - exact) / st.stderr
        ok &= z < 3 and st.n_samples >= 100_000
        parts.append(f"beta {beta}: {st.mean:.5f} vs {exact:.5f} ({z:.2f} sigma)")
    dt = time.perf_counter() - t0
    record(6, ok and dt < 10, "; ".join(parts) + f", {dt:.1f}s")


def test_criterion_7_low_temperature_gap():
    t0 = time.perf_counter()
    params = McParams(beta=5.0, sweeps=100_000, burnin=10_000, seed=2024)
    low, high = discontinuity_gap("nn", 1.0, [5.0, 0.1], [8, 12, 16], params, delta=0.2)
    dt = time.perf_counter() - t0
    pinned = all(abs(g - GAP_BETA5[r]) < GAP_PIN_TOL for g, r in zip(low.gaps, low.radii))
    ok = low.exceeds_delta_everywhere and all(high.consistent_with_zero) and pinned
    gaps = ", ".join(f"r={r}: {g:.4f}+-{e:.4f}" for r, g, e in zip(low.radii, low.gaps, low.stderrs))
    hot = ", ".join(f"{g:+.4f}+-{e:.4f}" for g, e in zip(high.gaps, high.stderrs))
    record(7, ok, f"beta 5 gaps {gaps}; beta 0.1 gaps {hot}; {dt:.0f}s")


def test_criterion_8_flip_equivariance():
    c = CouplingModel("nn")
    model = released_model(c, 2, 8)
    d_me, d_mw, _ = ground_dressings(c, 2, 8)
    m_me, m_mw = model.with_dressing(d_me), model.with_dressing(d_mw)
    p = McParams(beta=5.0, sweeps=5_000, burnin=1_000, seed=8)
    u = default_start(m_me)
    a = Chain(m_me, p, u, probe=(0, 0)).run()
    b = Chain(m_mw, p, u * np.array([-1.0, 1.0]), probe=(0, 0), mirrored=True).run()
    traj = (
        np.array_equal(a.vectors[:, 0], -b.vectors[:, 0])
        and np.array_equal(a.vectors[:, 1], b.vectors[:, 1])
        and np.array_equal(a.probe, -b.probe)
        and np.array_equal(a.m_ew, -b.m_ew)
        and np.array_equal(a.energy, b.energy)
    )
    hist = np.array_equal(mirror_histogram(a.m_ew, 41), mirror_histogram(-a.m_ew, 41)[::-1])
    hist &= np.array_equal(mirror_histogram(a.m_ew, 41), mirror_histogram(b.m_ew, 41)[::-1])
    record(8, traj and hist, f"trajectory mirror exact: {traj}; histogram mirror exact: {hist}")


def test_criterion_9_reproducible_outputs(tmp_path):
    cfgs = {
        "sample": {"mc": {"sweeps": 2000, "burnin": 200, "seed": 3}, "probe": {"observable": "sigma1_origin", "dressing": "ME"}},
        "gap-probe": {"geometry": {"annulusRadii": [4, 8]}, "mc": {"sweeps": 1000, "burnin": 200, "seed": 3}},
        "histogram": {"mc": {"sweeps": 500, "burnin": 100, "seed": 3}, "probe": {"chains": 4}},
    }
    same = {}
    for exp, body in cfgs.items():
        path = tmp_path / f"{exp}.json"
        path.write_text(json.dumps(body))
        blobs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert cli_main([exp, "--config", str(path), "--outdir", str(out)]) == 0
            d = out / f"{exp}-3"
            blobs.append([(d / f).read_bytes() for f in ("data.csv", "summary.json", "config.resolved.json")])
        same[exp] = blobs[0] == blobs[1]
    record(9, all(same.values()), ", ".join(f"{k}: {'identical' if v else 'DIFFER'}" for k, v in same.items()))


if __name__ == "__main__":
    import inspect
    import sys
    import tempfile
    from pathlib import Path

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in inspect.signature(fn).parameters:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                pass
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
