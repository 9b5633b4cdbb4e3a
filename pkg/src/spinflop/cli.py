"""``spinflop`` command line: one subcommand per experiment plus ``validate``.

Every run writes ``summary.json``, ``data.csv``, ``config.resolved.json``
and ``meta.json`` into ``<outdir>/<experiment>-<seed>/``.  Only
``meta.json`` carries timestamps; the other three files are byte-identical
across reruns of the same config in sequential mode.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ExperimentConfig
from .constraint import effective_field, site_field, verify_cancellation
from .couplings import (
    CATALAN,
    CouplingModel,
    catalan_field,
    catalan_series,
    catalan_terms_needed,
    tail_bound,
)
from .energy import Dressing, EnergyModel
from .groundstate import ground_pair
from .lattice import SiteClass, build_box, config_rows
from .probes import (
    discontinuity_gap,
    ground_dressings,
    released_model,
    spectral_gap_contrast,
    spinflop_histogram,
)
from .sampler import Chain, McParams, default_start

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def atomic_write(path: Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def csv_text(header: list[str], rows, seed: int, experiment: str) -> str:
    buf = io.StringIO()
    buf.write(f"# version={__version__} seed={seed} experiment={experiment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# experiments: each returns (summary dict, csv header, csv rows)
# --------------------------------------------------------------------------


def _coupling(cfg: ExperimentConfig) -> CouplingModel:
    m = cfg["model"]
    return CouplingModel(m["family"], float(m["J"]), int(m["truncationRadius"]))


def _params(cfg: ExperimentConfig, beta: float | None = None) -> McParams:
    mc = cfg["mc"]
    return McParams(
        beta=float(mc["beta"] if beta is None else beta),
        sweeps=int(mc["sweeps"]),
        burnin=int(mc["burnin"]),
        seed=int(mc["seed"]),
        proposal_width=float(mc["proposalWidth"]),
        adapt=bool(mc["adapt"]),
    )


def _box(cfg: ExperimentConfig):
    g = cfg["geometry"]
    return build_box(int(g["dimension"]), int(g["halfExtent"]))


def run_field_map(cfg, threads):
    box, coupling = _box(cfg), _coupling(cfg)
    fm = effective_field(box, coupling)
    hidden = ~box.frozen
    counts = {
        SiteClass(k).label: int(np.sum(fm.site_class == k)) for k in np.unique(fm.site_class) if k >= 0
    }
    report = verify_cancellation(fm) if np.all(fm.site_class >= 0) else None
    summary = {
        "h2Values": sorted({float(v) for v in fm.h[hidden, 1]}) if coupling.family.value == "nn" else None,
        "maxAbsH1": float(np.max(np.abs(fm.h[:, 0]))),
        "classCounts": counts,
        "cancellationPassed": None if report is None else report.passed,
        "violations": 0 if report is None else len(report),
    }
    header = ["x", "y"][: box.dimension] + ["h1", "h2", "site_class"]
    rows = [
        [*box.coords[k].tolist(), float(fm.h[k, 0]), float(fm.h[k, 1]), SiteClass(int(fm.site_class[k])).label]
        for k in range(box.n_sites)
    ]
    return summary, header, rows


def run_catalan_check(cfg, threads):
    tol = float(cfg["probe"]["tolerance"])
    value = catalan_field(tol)
    ref = 2 * CATALAN
    R = int(cfg["model"]["truncationRadius"])
    lr = CouplingModel("lr1d", float(cfg["model"]["J"]), R)
    lattice = float(site_field(lr, (1,))[1])
    summary = {
        "value": value,
        "reference": "2G",
        "referenceValue": ref,
        "diff": abs(value - ref),
        "tolerance": tol,
        "terms": catalan_terms_needed(tol),
        "latticeSum": {
            "truncationRadius": R,
            "J": lr.J,
            "value": lattice,
            "diffFrom2GJ": abs(lattice - ref * lr.J),
            "tailBound": tail_bound(lr, R),
        },
    }
    rows = []
    n = 1
    while n <= summary["terms"]:
        rows.append([n, catalan_series(n), abs(catalan_series(n) - ref)])
        n *= 2
    return summary, ["terms", "partial_sum", "abs_error"], rows


def run_ground_state(cfg, threads):
    box, coupling = _box(cfg), _coupling(cfg)
    model = EnergyModel(box, coupling, effective_field(box, coupling))
    p = cfg["probe"]
    me, mw = ground_pair(model, tol=float(p["tol"]), max_sweeps=int(p["maxSweeps"]))
    summary = {"ME": me.summary(), "MW": mw.summary(), "diagnostics": me.diagnostics}
    header = ["x", "y"][: box.dimension] + ["theta_ME", "theta_MW", "frozen", "site_class"]
    rows = []
    for k, (row_me, t_mw) in enumerate(zip(config_rows(me.config, model.field.site_class), mw.config.angles)):
        rows.append(row_me[: box.dimension] + [row_me[box.dimension], float(t_mw)] + row_me[box.dimension + 1 :])
    return summary, header, rows


def _dressing_for(cfg, model: EnergyModel, coupling: CouplingModel) -> Dressing:
    kind = cfg["probe"]["dressing"]
    g = cfg["geometry"]
    if kind == "free":
        return Dressing.free()
    if kind == "homogeneous":
        return Dressing.homogeneous(model.box, coupling, float(cfg["probe"]["dressingAngle"]))
    d_me, d_mw, _ = ground_dressings(coupling, int(g["dimension"]), int(g["halfExtent"]))
    return d_me if kind == "ME" else d_mw


def run_sample(cfg, threads):
    coupling = _coupling(cfg)
    g, p = cfg["geometry"], cfg["probe"]
    obs = p["observable"]
    if obs == "sigma1_origin":
        model = released_model(coupling, int(g["dimension"]), int(g["halfExtent"]))
    else:
        box = _box(cfg)
        model = EnergyModel(box, coupling, effective_field(box, coupling))
    model = model.with_dressing(_dressing_for(cfg, model, coupling))
    params = _params(cfg)
    probe = model.box.origin if obs == "sigma1_origin" else None
    result = Chain(model, params, default_start(model), probe=probe).run()
    stream = result.stream(obs)
    stats = result.stats(obs)
    summary = {
        "observable": obs,
        "dressing": p["dressing"],
        "stats": stats.to_dict(),
        "acceptance": result.acceptance,
        "proposalWidth": result.proposal_width,
        "params": params.to_dict(),
    }
    start = params.burnin
    rows = [[start + t, obs, float(v)] for t, v in enumerate(stream)]
    return summary, ["sweep", "observable", "value"], rows


def run_histogram(cfg, threads):
    box, coupling = _box(cfg), _coupling(cfg)
    model = EnergyModel(box, coupling, effective_field(box, coupling))
    p = cfg["probe"]
    params = _params(cfg)
    h = spinflop_histogram(
        model, params.beta, params, chains=int(p["chains"]), bins=int(p["bins"]), threads=threads
    )
    summary = dict(h.to_dict(), beta=params.beta, params=params.to_dict())
    rows = [[float(lo), float(hi), int(c)] for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts)]
    return summary, ["bin_lo", "bin_hi", "count"], rows


def run_gap_probe(cfg, threads):
    m, g, p = cfg["model"], cfg["geometry"], cfg["probe"]
    params = _params(cfg)
    results = discontinuity_gap(
        m["family"],
        float(m["J"]),
        [float(b) for b in p["betas"]],
        [int(r) for r in g["annulusRadii"]],
        params,
        float(p["delta"]),
        dimension=int(g["dimension"]),
        truncation_radius=int(m["truncationRadius"]),
        threads=threads,
        init=p["init"],
        paired=bool(p["paired"]),
    )
    summary = {"results": [r.to_dict() for r in results], "params": params.to_dict()}
    header = list(results[0].cells[0].row().keys())
    rows = [list(c.row().values()) for r in results for c in r.cells]
    return summary, header, rows


def run_spectral_gap(cfg, threads):
    m, g = cfg["model"], cfg["geometry"]
    s = spectral_gap_contrast(
        float(m["J"]), int(g["halfExtent"]), m["family"], int(g["dimension"]), int(m["truncationRadius"])
    )
    rows = [[k, float(v)] for k, v in enumerate(s.zero_mode)]
    return s.to_dict(), ["index", "zero_mode_component"], rows


RUNNERS = {
    "field-map": run_field_map,
    "catalan-check": run_catalan_check,
    "ground-state": run_ground_state,
    "sample": run_sample,
    "histogram": run_histogram,
    "gap-probe": run_gap_probe,
    "spectral-gap": run_spectral_gap,
}


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def _error(message: str, errors=None, code: int = EXIT_FAIL, outdir: Path | None = None) -> int:
    payload = {"status": "error", "message": message, "errors": list(errors or [])}
    text = dump_json(payload)
    sys.stderr.write(text)
    if outdir is not None:
        try:
            atomic_write(outdir / "error.json", text)
        except OSError:
            pass
    return code


def run(config_path: str, experiment: str | None, outdir: str | None, threads: int = 1) -> int:
    try:
        cfg, errors = ExperimentConfig.load(config_path, experiment)
    except OSError as exc:
        return _error(f"cannot read config: {exc}", code=EXIT_INVALID)
    if errors:
        return _error("invalid config", errors, EXIT_INVALID)
    if threads < 1:
        return _error("invalid arguments", ["--threads: must be >= 1"], EXIT_INVALID)
    root = Path(outdir if outdir is not None else cfg["output"])
    target = root / f"{cfg.experiment}-{cfg.seed}"
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        summary, header, rows = RUNNERS[cfg.experiment](cfg, threads)
    except Exception as exc:  # reported as machine-readable JSON
        return _error(f"{type(exc).__name__}: {exc}", code=EXIT_FAIL, outdir=target)
    summary = dict(summary, experiment=cfg.experiment, seed=cfg.seed, version=__version__)
    meta = {
        "started": started.isoformat(),
        "elapsedSeconds": time.perf_counter() - t0,
        "threads": threads,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "version": __version__,
        "seed": cfg.seed,
        "argv": sys.argv,
    }
    try:
        atomic_write(target / "data.csv", csv_text(header, rows, cfg.seed, cfg.experiment))
        atomic_write(target / "summary.json", dump_json(summary))
        atomic_write(target / "config.resolved.json", cfg.to_json())
        atomic_write(target / "meta.json", dump_json(meta))
    except OSError as exc:
        return _error(f"cannot write outputs: {exc}", code=EXIT_FAIL)
    print(str(target))
    return EXIT_OK


def validate(config_path: str) -> int:
    try:
        _, errors = ExperimentConfig.load(config_path)
    except OSError as exc:
        return _error(f"cannot read config: {exc}", code=EXIT_INVALID)
    if errors:
        print(dump_json({"status": "invalid", "errors": errors}), end="")
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinflop", description="Constrained rotator experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("run",):
        p = sub.add_parser(name, help="run the experiment named in the config" if name == "run" else None)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        p.add_argument("--outdir", default=None, help="output root (overrides config.output)")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return validate(args.config)
    experiment = None if args.command == "run" else args.command
    return run(args.config, experiment, args.outdir, args.threads)


if __name__ == "__main__":
    sys.exit(main())
