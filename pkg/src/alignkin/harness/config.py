"""Experiment configuration: TOML ingestion, validation and defaults.

A configuration file looks like::

    model = "first-order"

    [rates]
    lambda11 = 1.0
    mu11 = 4.0
    lambda12 = 0.5
    mu12 = 1.0
    epsilon = 0.1

    [grid]
    v_min = -6.0
    v_max = 6.0
    n = 128

    [[initial.f1]]
    kind = "gaussian"
    mean = 0.5
    sd = 0.7
    mass = 1.0

    [run]
    t_end = 5.0
    output_interval = 0.1

Unknown keys are rejected so typos surface as errors.  ``resolved`` holds
the full configuration with every default filled in; it is echoed into the
metadata of each output.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import RateTable, VelocityGrid
from ..errors import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ExperimentConfig", "load_config", "read_toml", "config_from_dict", "sweep_children", "MODEL_ALIASES"]

MODEL_ALIASES = {
    "particle": "particle",
    "particles": "particle",
    "moments": "moments",
    "reference": "reference",
    "a": "reference",
    "first-order": "first-order",
    "first_order": "first-order",
    "b": "first-order",
    "limit": "limit",
    "c": "limit",
    "scalar": "scalar",
    "d": "scalar",
}
KINETIC = ("reference", "first-order", "limit", "scalar")
NEEDS_EPS = ("reference", "first-order", "scalar")

DEFAULTS = {
    "rates": {"lambda11": 1.0, "mu11": 1.0, "lambda12": 0.0, "mu12": 0.0},
    "grid": {"v_min": -6.0, "v_max": 6.0, "n": 128},
    "initial": {"f1": [{"kind": "gaussian", "mean": 0.0, "sd": 1.0, "mass": 1.0}], "f2": "none",
                "f2_mass": 0.0, "pair_fraction": 0.0},
    "run": {"t_end": 1.0, "dt": None, "output_interval": 0.1, "seed": 0, "snapshot_interval": None},
    "tolerances": {"tail_tol": 1e-8, "leak_tol": 1e-6, "clip_tol": 1e-6, "drift_tol": 1e-4},
    "numerics": {"n_sigma": 32, "n_rho": 8, "dt_fast_factor": 0.25},
    "particle": {"n": 10000, "omega": None, "scaled": False, "kmax_obs": 3, "check_drift": False},
    "moments": {"system": "pair", "M0": None},
    "sweep": {"epsilon": None},
}
RATE_KEYS = {"lambda11", "mu11", "lambda12", "mu12", "epsilon", "kind", "lam", "mu", "kmax", "closed"}


@dataclass
class ExperimentConfig:
    """Validated experiment description (see module docstring for the layout)."""

    model: str
    rates: RateTable
    grid: VelocityGrid
    initial: dict
    run: dict
    tolerances: dict
    numerics: dict
    particle: dict
    moments: dict
    sweep: list[float] | None
    resolved: dict

    @property
    def epsilon(self) -> float:
        return self.rates.epsilon

    def digest(self) -> str:
        """Short hash of the resolved configuration."""
        blob = json.dumps(self.resolved, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file."""
    return config_from_dict(read_toml(path))


def read_toml(path) -> dict:
    """Parse a TOML file without validating it."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{p}: parse error: {exc}") from exc
    return data


def _merge(section: str, given) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigurationError(f"[{section}] must be a table")
    allowed = RATE_KEYS if section == "rates" else set(DEFAULTS[section])
    unknown = set(given) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    out = copy.deepcopy(DEFAULTS[section])
    out.update(copy.deepcopy(given))
    return out


def _positive(section: str, key: str, value, integer: bool = False, allow_none: bool = False):
    if value is None and allow_none:
        return None
    try:
        x = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{section}.{key} must be a number, got {value!r}") from None
    if integer and x != value:
        raise ConfigurationError(f"{section}.{key} must be an integer")
    if not (x > 0 and math.isfinite(x)):
        raise ConfigurationError(f"{section}.{key} must be positive, got {value!r}")
    return x


def _build_rates(model: str, r: dict) -> RateTable:
    eps = r.get("epsilon")
    if model in NEEDS_EPS and eps is None:
        raise ConfigurationError(f"rates.epsilon is required for model '{model}'")
    eps = 1.0 if eps is None else _positive("rates", "epsilon", eps)
    kind = r.get("kind", "three-species")
    try:
        if kind == "three-species":
            for key in ("lambda11", "mu11", "lambda12", "mu12"):
                if float(r[key]) < 0:
                    raise ConfigurationError(f"rates.{key} must be nonnegative")
            return RateTable.three_species(float(r["lambda11"]), float(r["mu11"]), float(r["lambda12"]),
                                           float(r["mu12"]), eps)
        if kind == "constant":
            kmax = _positive("rates", "kmax", r.get("kmax", 3), integer=True)
            return RateTable.constant(float(r.get("lam", 1.0)), float(r.get("mu", 1.0)), kmax, eps,
                                      closed=bool(r.get("closed", True)))
        if kind == "table":
            if "lam" not in r or "mu" not in r:
                raise ConfigurationError("rates.kind = 'table' needs rates.lam and rates.mu")
            lam = np.asarray(r["lam"], dtype=float)
            mu = np.asarray(r["mu"], dtype=float)
            # tables are given for sizes 1..kmax; prepend the unused zero row/column
            return RateTable(np.pad(lam, ((1, 0), (1, 0))), np.pad(mu, ((1, 0), (1, 0))), eps)
    except ConfigurationError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"[rates]: {exc}") from exc
    raise ConfigurationError(f"rates.kind must be 'three-species', 'constant' or 'table', got {kind!r}")


def _check_mixture(name: str, comps) -> list[dict]:
    if not isinstance(comps, list) or not comps:
        raise ConfigurationError(f"initial.{name} must be a nonempty list of components")
    out = []
    for q, c in enumerate(comps):
        if not isinstance(c, dict):
            raise ConfigurationError(f"initial.{name}[{q}] must be a table")
        c = dict(c)
        kind = c.setdefault("kind", "gaussian")
        c.setdefault("mass", 1.0)
        if float(c["mass"]) < 0:
            raise ConfigurationError(f"initial.{name}[{q}].mass must be nonnegative")
        if kind == "gaussian":
            c.setdefault("mean", 0.0)
            if isinstance(c["mean"], list):
                # f2 components may give per-coordinate means; they must agree
                if name != "f2" or len(c["mean"]) != 2:
                    raise ConfigurationError(f"initial.{name}[{q}].mean must be a number")
                if float(c["mean"][0]) != float(c["mean"][1]):
                    raise ConfigurationError(f"initial.{name}[{q}].mean is asymmetric: f2 must be "
                                             "symmetric in (v1, v2)")
                c["mean"] = float(c["mean"][0])
            c.setdefault("sd", 1.0)
            _positive(f"initial.{name}[{q}]", "sd", c["sd"])
        elif kind == "uniform":
            c.setdefault("lo", -1.0)
            c.setdefault("hi", 1.0)
            if not float(c["lo"]) < float(c["hi"]):
                raise ConfigurationError(f"initial.{name}[{q}] needs lo < hi")
        else:
            raise ConfigurationError(f"initial.{name}[{q}].kind must be 'gaussian' or 'uniform'")
        unknown = set(c) - {"kind", "mass", "mean", "sd", "lo", "hi"}
        if unknown:
            raise ConfigurationError(f"unknown key(s) in initial.{name}[{q}]: {', '.join(sorted(unknown))}")
        out.append(c)
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a parsed configuration mapping and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a table")
    top_unknown = set(data) - ({"model"} | set(DEFAULTS))
    if top_unknown:
        raise ConfigurationError(f"unknown top-level key(s): {', '.join(sorted(top_unknown))}")
    if "model" not in data:
        raise ConfigurationError("'model' is required")
    model = MODEL_ALIASES.get(str(data["model"]).lower())
    if model is None:
        raise ConfigurationError(f"model must be one of {sorted(set(MODEL_ALIASES.values()))}, "
                                 f"got {data['model']!r}")
    sec = {name: _merge(name, data.get(name)) for name in DEFAULTS}
    rates = _build_rates(model, sec["rates"])

    g = sec["grid"]
    n = _positive("grid", "n", g["n"], integer=True)
    if n < 2:
        raise ConfigurationError("grid.n must be at least 2")
    if not float(g["v_min"]) < float(g["v_max"]):
        raise ConfigurationError("grid.v_min must be below grid.v_max")
    grid = VelocityGrid(float(g["v_min"]), float(g["v_max"]), n)

    init = sec["initial"]
    init["f1"] = _check_mixture("f1", init["f1"])
    f2 = init["f2"]
    if isinstance(f2, str):
        if f2 not in ("none", "quasi-stationary", "product"):
            raise ConfigurationError("initial.f2 must be 'none', 'quasi-stationary', 'product' "
                                     "or a list of mixture components")
    else:
        # product-form f2 = c g(v1) g(v2) is symmetric by construction
        init["f2"] = _check_mixture("f2", f2)
    if float(init["f2_mass"]) < 0:
        raise ConfigurationError("initial.f2_mass must be nonnegative")

    run = sec["run"]
    run["t_end"] = float(run["t_end"])
    if run["t_end"] < 0:
        raise ConfigurationError("run.t_end must be nonnegative")
    run["dt"] = _positive("run", "dt", run["dt"], allow_none=True)
    run["output_interval"] = _positive("run", "output_interval", run["output_interval"])
    run["snapshot_interval"] = _positive("run", "snapshot_interval", run["snapshot_interval"],
                                         allow_none=True)
    run["seed"] = int(run["seed"])

    tol = sec["tolerances"]
    for key in tol:
        tol[key] = _positive("tolerances", key, tol[key])
    num = sec["numerics"]
    num["n_sigma"] = _positive("numerics", "n_sigma", num["n_sigma"], integer=True)
    num["n_rho"] = _positive("numerics", "n_rho", num["n_rho"], integer=True)
    num["dt_fast_factor"] = _positive("numerics", "dt_fast_factor", num["dt_fast_factor"])

    part = sec["particle"]
    part["n"] = _positive("particle", "n", part["n"], integer=True)
    part["omega"] = _positive("particle", "omega", part["omega"], allow_none=True)
    part["kmax_obs"] = _positive("particle", "kmax_obs", part["kmax_obs"], integer=True)
    part["scaled"] = bool(part["scaled"])
    part["check_drift"] = bool(part["check_drift"])

    mom = sec["moments"]
    if mom["system"] not in ("pair", "mk"):
        raise ConfigurationError("moments.system must be 'pair' or 'mk'")
    if mom["M0"] is not None:
        M0 = [float(x) for x in mom["M0"]]
        if any(x < 0 for x in M0):
            raise ConfigurationError("moments.M0 entries must be nonnegative")
        mom["M0"] = M0

    sweep = sec["sweep"]["epsilon"]
    if sweep is not None:
        sweep = [_positive("sweep", "epsilon", x) for x in sweep]
        if len(sweep) < 1:
            raise ConfigurationError("sweep.epsilon must not be empty")

    resolved = {"model": model, **sec}
    resolved["rates"] = {**sec["rates"], "epsilon": rates.epsilon}
    return ExperimentConfig(model, rates, grid, init, run, tol, num, part, mom, sweep,
                            json.loads(json.dumps(resolved, default=str)))


def sweep_children(cfg: ExperimentConfig, eps_values=None) -> list[ExperimentConfig]:
    """One configuration per epsilon, sorted by decreasing epsilon.

    Grid, initial data and seed are shared, so the members are directly
    comparable.
    """
    values = eps_values if eps_values is not None else cfg.sweep
    if not values:
        raise ConfigurationError("no epsilon values to sweep (set sweep.epsilon or --eps)")
    out = []
    for eps in sorted({float(e) for e in values}, reverse=True):
        data = copy.deepcopy(cfg.resolved)
        data["rates"]["epsilon"] = eps
        data["sweep"] = {"epsilon": None}
        for key in list(data["rates"]):
            if data["rates"][key] is None:
                del data["rates"][key]
        out.append(config_from_dict(data))
    return out
