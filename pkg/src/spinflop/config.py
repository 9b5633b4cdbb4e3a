"""Declarative experiment configs (JSON) with field-level validation."""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .couplings import Family
from .sampler import OBSERVABLES

EXPERIMENTS = (
    "field-map",
    "catalan-check",
    "ground-state",
    "sample",
    "histogram",
    "gap-probe",
    "spectral-gap",
)
DRESSING_NAMES = ("ME", "MW", "free", "homogeneous")
SEED_ENV = "SPINFLOP_SEED"

DEFAULTS = {
    "experiment": None,
    "model": {"family": "nn", "J": 1.0, "truncationRadius": 64},
    "geometry": {"dimension": 2, "halfExtent": 8, "annulusRadii": [8, 12, 16]},
    "mc": {
        "beta": 5.0,
        "sweeps": 10000,
        "burnin": 1000,
        "seed": 0,
        "proposalWidth": 1.0,
        "adapt": True,
    },
    "probe": {
        "betas": [5.0, 0.1],
        "delta": 0.2,
        "observable": "mEW_density",
        "dressing": "free",
        "dressingAngle": 0.0,
        "chains": 16,
        "bins": 41,
        "tolerance": 1e-9,
        "tol": 1e-11,
        "maxSweeps": 100000,
        "init": "ground",
        "paired": True,
    },
    "output": "runs",
}


class ConfigError(ValueError):
    """Raised with the full list of field-level problems."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _merge(base: dict, over: dict, path: str, errors: list) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            errors.append(f"{where}: unknown field")
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                errors.append(f"{where}: must be an object")
            else:
                out[key] = _merge(base[key], value, where + ".", errors)
        else:
            out[key] = value
    return out


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass
class ExperimentConfig:
    """A resolved config: every section present, defaults filled."""

    data: dict

    @property
    def experiment(self) -> str:
        return self.data["experiment"]

    @property
    def seed(self) -> int:
        return int(self.data["mc"]["seed"])

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(
        cls, raw: dict, experiment: str | None = None, env: dict | None = None
    ) -> tuple[ExperimentConfig, list[str]]:
        """Resolve defaults and overrides; returns (config, errors)."""
        errors: list[str] = []
        if not isinstance(raw, dict):
            return cls(copy.deepcopy(DEFAULTS)), ["config must be a JSON object"]
        data = _merge(DEFAULTS, raw, "", errors)
        if experiment is not None:
            if raw.get("experiment") not in (None, experiment):
                errors.append(
                    f"experiment: config says {raw['experiment']!r} but {experiment!r} was requested"
                )
            data["experiment"] = experiment
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            try:
                data["mc"]["seed"] = int(env[SEED_ENV])
            except ValueError:
                errors.append(f"{SEED_ENV}: not an integer")
        cfg = cls(data)
        errors.extend(validate_data(data))
        return cfg, errors

    @classmethod
    def load(
        cls, path: str | Path, experiment: str | None = None, env: dict | None = None
    ) -> tuple[ExperimentConfig, list[str]]:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                return cls(copy.deepcopy(DEFAULTS)), [f"not valid JSON: {exc}"]
        return cls.from_dict(raw, experiment, env)


def validate_data(d: dict) -> list[str]:
    """All violated preconditions, one message per field."""
    e: list[str] = []
    exp = d["experiment"]
    if exp not in EXPERIMENTS:
        e.append(f"experiment: must be one of {list(EXPERIMENTS)}")

    m, g, mc, p = d["model"], d["geometry"], d["mc"], d["probe"]
    family = None
    try:
        family = Family(m["family"])
    except ValueError:
        e.append(f"model.family: must be one of {[f.value for f in Family]}")
    if not _is_num(m["J"]) or m["J"] < 0:
        e.append("model.J: must be a number >= 0")
    if not _is_int(m["truncationRadius"]) or m["truncationRadius"] < 1:
        e.append("model.truncationRadius: must be a positive integer")

    dim = g["dimension"]
    if dim not in (1, 2) or not _is_int(dim):
        e.append("geometry.dimension: must be 1 or 2")
    elif family is Family.LONG_RANGE_1D and dim != 1:
        e.append("geometry.dimension: lr1d couplings need dimension 1")
    elif family is Family.LONG_RANGE_2D and dim != 2:
        e.append("geometry.dimension: lr2d couplings need dimension 2")
    L = g["halfExtent"]
    if not _is_int(L) or L < 4:
        e.append("geometry.halfExtent: must be an integer >= 4")
    elif L % 4:
        e.append("geometry.halfExtent: must be multiple of 4")
    radii = g["annulusRadii"]
    if not isinstance(radii, list) or not radii or not all(_is_int(r) and r > 0 for r in radii):
        e.append("geometry.annulusRadii: must be a non-empty list of positive integers")
    else:
        if any(r % 4 for r in radii):
            e.append("geometry.annulusRadii: every radius must be multiple of 4")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            e.append("geometry.annulusRadii: must be increasing")

    if not _is_num(mc["beta"]) or mc["beta"] < 0:
        e.append("mc.beta: must be a finite number >= 0")
    if not _is_int(mc["sweeps"]) or mc["sweeps"] < 1:
        e.append("mc.sweeps: must be a positive integer")
    if not _is_int(mc["burnin"]) or mc["burnin"] < 0:
        e.append("mc.burnin: must be an integer >= 0")
    if not _is_int(mc["seed"]) or not 0 <= mc["seed"] < 2**64:
        e.append("mc.seed: must be an integer in [0, 2^64)")
    if not _is_num(mc["proposalWidth"]) or not 0 < mc["proposalWidth"] <= math.pi:
        e.append("mc.proposalWidth: must lie in (0, pi]")
    if not isinstance(mc["adapt"], bool):
        e.append("mc.adapt: must be true or false")

    betas = p["betas"]
    if not isinstance(betas, list) or not betas or not all(_is_num(b) and b >= 0 for b in betas):
        e.append("probe.betas: must be a non-empty list of numbers >= 0")
    if not _is_num(p["delta"]) or p["delta"] <= 0:
        e.append("probe.delta: must be > 0")
    if p["observable"] not in OBSERVABLES:
        e.append(f"probe.observable: must be one of {list(OBSERVABLES)}")
    if p["dressing"] not in DRESSING_NAMES:
        e.append(f"probe.dressing: must be one of {list(DRESSING_NAMES)}")
    if not _is_num(p["dressingAngle"]):
        e.append("probe.dressingAngle: must be a number")
    if not _is_int(p["chains"]) or p["chains"] < 2:
        e.append("probe.chains: must be an integer >= 2")
    if not _is_int(p["bins"]) or p["bins"] < 3 or p["bins"] % 2 == 0:
        e.append("probe.bins: must be an odd integer >= 3")
    for key in ("tolerance", "tol"):
        if not _is_num(p[key]) or p[key] <= 0:
            e.append(f"probe.{key}: must be > 0")
    if not _is_int(p["maxSweeps"]) or p["maxSweeps"] < 1:
        e.append("probe.maxSweeps: must be a positive integer")
    if p["init"] not in ("north", "ground"):
        e.append("probe.init: must be 'north' or 'ground'")
    if not isinstance(p["paired"], bool):
        e.append("probe.paired: must be true or false")
    if not isinstance(d["output"], str) or not d["output"]:
        e.append("output: must be a non-empty path")

    if exp == "gap-probe" and family is Family.LONG_RANGE_2D:
        e.append("model.family: the gap probe supports nn and lr1d couplings")
    return e
