"""Experiment orchestration: initial data, single runs, sweeps and comparisons."""

from __future__ import annotations

import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .. import __version__
from .. import moments as mom
from .. import particle
from ..core import Density, VelocityGrid
from ..errors import ConfigurationError, NumericalError
from ..kinetic import operators as op
from ..kinetic.solvers import SolverOptions, make_solver
from ..series import RunSeries
from .compare import Comparison, compare_l1, convergence_order
from .config import KINETIC, ExperimentConfig, config_from_dict, sweep_children
from .io import emit, write_snapshot

__all__ = ["ExperimentResult", "initial_f1", "initial_f2", "solver_options", "run_experiment",
           "run_sweep", "compare_runs", "sweep_order", "write_outputs", "drift_report"]

DRIFT_COLUMNS = ("mass", "momentum")
# the scalar model exchanges O(eps^2) mass with the correlated pairs, so its
# mass column is reported but does not gate the run
NOT_CONSERVED = {"scalar": ("mass",)}


@dataclass
class ExperimentResult:
    series: RunSeries
    config: ExperimentConfig
    drift: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(d["ok"] for d in self.drift.values())


# -- initial data ---------------------------------------------------------------

def _cell_averages(grid: VelocityGrid, comp: dict) -> np.ndarray:
    """Exact cell averages of one mixture component's density (mass ``comp['mass']``)."""
    e = grid.edges
    if comp["kind"] == "gaussian":
        cdf = ndtr((e - float(comp["mean"])) / float(comp["sd"]))
    else:
        lo, hi = float(comp["lo"]), float(comp["hi"])
        cdf = np.clip((e - lo) / (hi - lo), 0.0, 1.0)
    return float(comp["mass"]) * np.diff(cdf) / grid.h


def _mixture(grid: VelocityGrid, comps: list[dict]) -> np.ndarray:
    return sum(_cell_averages(grid, c) for c in comps)


def initial_f1(cfg: ExperimentConfig) -> Density:
    return Density(cfg.grid, _mixture(cfg.grid, cfg.initial["f1"]))


def initial_f2(cfg: ExperimentConfig, f1: Density) -> Density | None:
    """Pair density requested by ``initial.f2``.

    ``product`` is ``f2_mass * g(v1) g(v2)`` with ``g`` the normalised f1;
    a component list gives ``sum mass * phi(v1) phi(v2)`` with unit-mass
    profiles ``phi``.  Both are symmetric by construction.
    """
    spec = cfg.initial["f2"]
    g = cfg.grid
    if spec == "none":
        return None
    if spec == "quasi-stationary":
        return op.f2_limit(f1, cfg.rates, cfg.numerics["n_sigma"])
    if spec == "product":
        m = f1.mass()
        if m <= 0:
            raise ConfigurationError("initial.f2 = 'product' needs f1 with positive mass")
        prof = f1.values / m
        return Density(g, float(cfg.initial["f2_mass"]) * np.outer(prof, prof))
    out = np.zeros((g.n, g.n))
    for c in spec:
        prof = _cell_averages(g, {**c, "mass": 1.0})
        out += float(c["mass"]) * np.outer(prof, prof)
    return Density(g, out)


def solver_options(cfg: ExperimentConfig) -> SolverOptions:
    tol = cfg.tolerances
    num = cfg.numerics
    return SolverOptions(dt=cfg.run["dt"], dt_fast_factor=num["dt_fast_factor"],
                         n_sigma=num["n_sigma"], n_rho=num["n_rho"],
                         clip_tol=tol["clip_tol"], leak_tol=tol["leak_tol"])


def _output_times(t_end: float, interval: float) -> list[float]:
    n = int(math.floor(t_end / interval + 1e-9))
    return [q * interval for q in range(n + 1)]


# -- drivers ---------------------------------------------------------------------

def _run_kinetic(cfg: ExperimentConfig, out_dir: Path | None) -> RunSeries:
    f1 = initial_f1(cfg)
    f2 = initial_f2(cfg, f1)
    solver = make_solver(cfg.model, cfg.grid, cfg.rates, f1, f2, solver_options(cfg))
    snap_every = cfg.run["snapshot_interval"] or cfg.run["output_interval"]
    try:
        series = solver.run(cfg.run["t_end"], cfg.run["output_interval"],
                            _output_times(cfg.run["t_end"], snap_every))
    except NumericalError:
        if out_dir is not None:
            # keep the last state reached for post-mortem inspection
            out_dir.mkdir(parents=True, exist_ok=True)
            write_snapshot(solver.snapshot(), out_dir / "last_valid.snap")
        raise
    return series


def _particle_config(cfg: ExperimentConfig) -> particle.ParticleConfig:
    law = []
    for c in cfg.initial["f1"]:
        if c["kind"] == "gaussian":
            law.append({"kind": "gaussian", "mean": c["mean"], "std": c["sd"], "weight": c["mass"]})
        else:
            law.append({"kind": "uniform", "low": c["lo"], "high": c["hi"], "weight": c["mass"]})
    p = cfg.particle
    return particle.ParticleConfig(n=p["n"], rates=cfg.rates, t_end=cfg.run["t_end"],
                                   dt_out=cfg.run["output_interval"], seed=cfg.run["seed"],
                                   omega=p["omega"], scaled=p["scaled"], kmax_obs=p["kmax_obs"],
                                   law=law, pair_fraction=cfg.initial["pair_fraction"],
                                   grid=cfg.grid, check_drift=p["check_drift"])


def _run_moments(cfg: ExperimentConfig) -> RunSeries:
    r = cfg.rates
    dt = cfg.run["dt"] or min(1e-3, 0.25 * r.epsilon)
    every = max(1, int(round(cfg.run["output_interval"] / dt)))
    if cfg.moments["system"] == "pair":
        f1 = initial_f1(cfg)
        f2 = initial_f2(cfg, f1)
        y0 = [f1.mass(), 0.0, f1.first_moment(), 0.0]
        if f2 is not None:
            y0[1] = f2.mass()
            y0[3] = op.masses(f2).sum(axis=1) @ cfg.grid.centers
        if cfg.moments["M0"] is not None:
            y0[:2] = cfg.moments["M0"][:2]

        def rhs(t, y):
            s = mom.PairMomentState(y[0], y[1], y[2], y[3])
            return np.array([*mom.pair_mass_rhs(r, s), *mom.pair_first_moment_rhs(r, s)])

        traj = mom.integrate_ode(rhs, y0, cfg.run["t_end"], dt, every)
        e = r.epsilon
        rows = [{"t": float(t), "M1": float(y[0]), "M2": float(y[1]), "I1": float(y[2]),
                 "I2": float(y[3]), "mass": float(y[0] + 2 * e * y[1]),
                 "momentum": float(y[2] + 2 * e * y[3])}
                for t, y in zip(traj.t, traj.y)]
        M1inf, M2inf = mom.equilibrium_masses(r, y0[0] + 2 * e * y0[1])
        meta = {"system": "pair", "M1_inf": M1inf, "M2_inf": M2inf}
    else:
        M0 = cfg.moments["M0"]
        if M0 is None:
            M0 = [initial_f1(cfg).mass()] + [0.0] * (r.kmax - 1)
        if len(M0) != r.kmax:
            raise ConfigurationError(f"moments.M0 needs {r.kmax} entries, got {len(M0)}")
        traj = mom.integrate_ode(lambda t, y: mom.mk_rhs(r, y), M0, cfg.run["t_end"], dt, every)
        k = np.arange(1, r.kmax + 1)
        rows = []
        for t, y in zip(traj.t, traj.y):
            row = {"t": float(t), **{f"M{q + 1}": float(y[q]) for q in range(r.kmax)}}
            row["mass"] = float(k @ y)
            rows.append(row)
        meta = {"system": "mk"}
    return RunSeries(rows=rows, meta=meta)


def drift_report(series: RunSeries, tol: float, model: str | None = None) -> dict:
    """Largest relative drift of the conserved columns present in ``series``.

    Columns the model does not conserve are reported with ``gated=False``
    and always count as ``ok``.
    """
    out = {}
    free = NOT_CONSERVED.get(model, ())
    for name in DRIFT_COLUMNS:
        if not series.rows or name not in series.rows[0]:
            continue
        x = series.column(name)
        scale = abs(x[0]) if name == "mass" else max(1.0, abs(x[0]))
        d = float(np.max(np.abs(x - x[0])) / max(scale, 1e-300))
        gated = name not in free
        out[name] = {"drift": d, "tol": tol, "ok": bool(d <= tol or not gated), "gated": gated}
    return out


def run_experiment(cfg: ExperimentConfig, out_dir=None, fmt: str = "csv") -> ExperimentResult:
    """Run the configured model and attach drift diagnostics to the metadata.

    With ``out_dir`` the series, snapshots and (on numerical failure) the
    last valid state are written there.
    """
    out = Path(out_dir) if out_dir is not None else None
    if cfg.model == "particle":
        series = particle.run(_particle_config(cfg))
    elif cfg.model == "moments":
        series = _run_moments(cfg)
    elif cfg.model in KINETIC:
        series = _run_kinetic(cfg, out)
    else:  # pragma: no cover - config validation rejects this
        raise ConfigurationError(f"unknown model {cfg.model!r}")
    drift = drift_report(series, cfg.tolerances["drift_tol"], cfg.model)
    if cfg.model == "particle" and series.rows:
        # individuals are conserved exactly; the relevant drift is the mean velocity
        v = series.column("v_mean")
        d = float(np.max(np.abs(v - v[0])) / max(1.0, abs(v[0])))
        drift["mean_velocity"] = {"drift": d, "tol": cfg.tolerances["drift_tol"],
                                  "ok": bool(d <= cfg.tolerances["drift_tol"]), "gated": True}
    series.meta.update(model=cfg.model, config=cfg.resolved, config_hash=cfg.digest(),
                       versions={"alignkin": __version__, "numpy": np.__version__,
                                 "python": platform.python_version()},
                       diagnostics=drift)
    result = ExperimentResult(series, cfg, drift)
    if out is not None:
        write_outputs(result, out, fmt)
    return result


def write_outputs(result: ExperimentResult, out_dir, fmt: str = "csv", stem: str | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or result.config.model
    path = emit(result.series, fmt, out / f"{stem}.{fmt}")
    for q, snap in enumerate(result.series.snapshots):
        write_snapshot(snap, out / f"{stem}_snap{q:04d}.snap")
    return path


def run_sweep(cfg: ExperimentConfig, eps_values=None, out_dir=None,
              fmt: str = "csv") -> list[ExperimentResult]:
    """Run one child per epsilon; results are returned sorted by decreasing epsilon."""
    results = []
    for child in sweep_children(cfg, eps_values):
        sub = None if out_dir is None else Path(out_dir) / f"eps_{child.epsilon:.6g}"
        results.append(run_experiment(child, sub, fmt))
    return sorted(results, key=lambda r: -r.config.epsilon)


def compare_runs(a: ExperimentResult, b: ExperimentResult,
                 t_window: tuple[float, float] | None = None) -> Comparison:
    return compare_l1(a.series, b.series, t_window)


def sweep_order(cfg_a: ExperimentConfig, model_b: str, eps_values,
                t_window=None) -> tuple[list[tuple[float, float]], tuple[float, float]]:
    """Error of ``cfg_a``'s model against ``model_b`` along an epsilon ladder, plus the order fit.

    ``t_window`` may be a callable of epsilon returning the window.
    """
    errors = []
    for child in sweep_children(cfg_a, eps_values):
        ra = run_experiment(child)
        data = dict(child.resolved)
        data["model"] = model_b
        rb = run_experiment(config_from_dict(data))
        win = t_window(child.epsilon) if callable(t_window) else t_window
        errors.append((child.epsilon, compare_runs(ra, rb, win).sup_l1))
    return errors, convergence_order(errors)
