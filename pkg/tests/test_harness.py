from __future__ import annotations

import json

import numpy as np
import pytest

from alignkin.errors import ConfigurationError, DomainError
from alignkin.harness import compare as cmp
from alignkin.harness import io
from alignkin.harness.cli import main
from alignkin.harness.config import DEFAULTS, config_from_dict, load_config, sweep_children
from alignkin.harness.experiments import run_experiment
from alignkin.series import RunSeries

SMALL = {
    "rates": {"lambda11": 1.0, "mu11": 4.0, "lambda12": 0.5, "mu12": 1.0, "epsilon": 0.2},
    "grid": {"v_min": -5.0, "v_max": 5.0, "n": 20},
    "initial": {"f1": [{"kind": "gaussian", "mean": 0.5, "sd": 0.5, "mass": 1.0}]},
    "run": {"t_end": 0.2, "dt": 0.025, "output_interval": 0.05, "snapshot_interval": 0.1},
    "numerics": {"n_sigma": 8, "n_rho": 4},
}


def _cfg(model, **sections):
    data = json.loads(json.dumps(SMALL))
    data["model"] = model
    for name, values in sections.items():
        data.setdefault(name, {}).update(values)
    return config_from_dict(data)


def _toml(path, model, extra=""):
    path.write_text(f'''model = "{model}"
[rates]
lambda11 = 1.0
mu11 = 4.0
lambda12 = 0.5
mu12 = 1.0
epsilon = 0.2
[grid]
v_min = -5.0
v_max = 5.0
n = 20
[run]
t_end = 0.2
dt = 0.025
output_interval = 0.05
[numerics]
n_sigma = 8
n_rho = 4
{extra}''')
    return path


# -- configuration ---------------------------------------------------------------

def test_minimal_config_echoes_defaults():
    cfg = config_from_dict({"model": "limit"})
    for section in ("grid", "run", "tolerances", "numerics"):
        for key, value in DEFAULTS[section].items():
            assert cfg.resolved[section][key] == value
    assert cfg.grid.n == DEFAULTS["grid"]["n"]
    assert len(cfg.digest()) == 16


def test_missing_epsilon_names_the_field():
    with pytest.raises(ConfigurationError, match="rates.epsilon"):
        config_from_dict({"model": "first-order"})


def test_sweep_produces_children_by_decreasing_eps():
    cfg = _cfg("scalar", sweep={"epsilon": [0.05, 0.2, 0.1]})
    kids = sweep_children(cfg)
    assert [k.epsilon for k in kids] == [0.2, 0.1, 0.05]
    assert all(k.model == "scalar" for k in kids)


def test_asymmetric_pair_data_rejected():
    with pytest.raises(ConfigurationError, match="asymmetric"):
        _cfg("first-order", initial={"f2": [{"kind": "gaussian", "mean": [0.0, 1.0], "sd": 0.5, "mass": 0.1}]})


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError, match="tmax"):
        _cfg("limit", run={"tmax": 3.0})


def test_load_config_from_file(tmp_path):
    cfg = load_config(_toml(tmp_path / "c.toml", "scalar"))
    assert cfg.model == "scalar" and cfg.epsilon == 0.2


# -- output formats ----------------------------------------------------------------

def _series():
    rows = [{"t": 0.0, "mass": 1.0, "x": 1 / 3}, {"t": 0.1, "mass": 1.0 + 1e-16, "x": np.pi}]
    return RunSeries(rows=rows, meta={"model": "demo", "value": 0.5})


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_series_roundtrip(tmp_path, fmt):
    s = _series()
    path = io.emit(s, fmt, tmp_path / f"s.{fmt}")
    back = io.read_series(path)
    assert back.rows == s.rows
    assert back.meta["model"] == "demo"


def test_empty_series_writes_header(tmp_path):
    s = RunSeries(rows=[], meta={"columns": ["t", "mass"]})
    path = io.emit(s, "csv", tmp_path / "e.csv")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == "t,mass" and len(lines) == 2
    assert io.read_csv(path).rows == []


def test_snapshot_roundtrip(tmp_path):
    snap = {"t": 0.5, "model": "x", "grid": {"v_min": -1.0, "v_max": 1.0, "n": 4},
            "fields": {"f1": np.arange(4.0), "f2": np.eye(4)}}
    back = io.read_snapshot(io.write_snapshot(snap, tmp_path / "a.snap"))
    assert back["t"] == 0.5
    assert np.array_equal(back["fields"]["f2"], np.eye(4))


# -- comparison ---------------------------------------------------------------------

def test_distances():
    rng = np.random.default_rng(0)
    a = rng.random((16, 16))
    assert cmp.l1_distance(a, a, 0.1) == 0.0
    assert cmp.bounded_lipschitz(a, a, 0.1) == pytest.approx(0.0, abs=1e-12)
    # two unit point masses far apart: BL distance is the total mass
    x = np.zeros(40)
    y = np.zeros(40)
    x[0] = y[-1] = 1.0
    assert cmp.bounded_lipschitz(x, y, 1.0) == pytest.approx(2.0)
    assert cmp.l1_distance(x, y, 1.0) == pytest.approx(2.0)
    # a short translation costs the shift
    # a one-cell translation of unit mass (densities 1/h) costs the shift h
    h = 0.3
    x1 = np.zeros(40)
    x2 = np.zeros(40)
    x1[0] = x2[1] = 1.0 / h
    assert cmp.bounded_lipschitz(x1, x2, h) == pytest.approx(h)
    with pytest.raises(ConfigurationError):
        cmp.l1_distance(np.zeros(4), np.zeros(5), 1.0)


def test_compare_rejects_incompatible_grids():
    def run(n):
        return RunSeries(snapshots=[{"t": 0.0, "grid": {"v_min": -1, "v_max": 1, "n": n},
                                     "fields": {"f1": np.zeros(n)}}])
    with pytest.raises(ConfigurationError, match="incompatible"):
        cmp.compare_l1(run(4), run(8))


@pytest.mark.parametrize("order", [1.0, 2.0])
def test_convergence_order_exact_slopes(order):
    errs = [(e, 3.0 * e ** order) for e in (0.05, 0.2, 0.1)]
    slope, r2 = cmp.convergence_order(errs)
    assert slope == pytest.approx(order, abs=1e-12)
    assert r2 == pytest.approx(1.0)


def test_convergence_order_input_errors():
    with pytest.raises(DomainError):
        cmp.convergence_order([(0.1, 1.0), (0.2, 2.0)])
    with pytest.raises(DomainError):
        cmp.convergence_order([(0.1, 1.0), (0.2, 0.0), (0.4, 1.0)])
    with pytest.raises(DomainError):
        cmp.convergence_order([(0.1, 1.0), (0.1, 2.0), (0.4, 1.0)])


# -- experiments ------------------------------------------------------------------

def test_moment_run_approaches_equilibrium():
    cfg = _cfg("moments", run={"t_end": 40.0, "dt": 0.01, "output_interval": 1.0})
    res = run_experiment(cfg)
    last = res.series.rows[-1]
    assert last["M1"] == pytest.approx(res.series.meta["M1_inf"], rel=1e-6)
    assert res.ok


def test_particle_output_is_reproducible(tmp_path):
    cfg = _cfg("particle", particle={"n": 300}, run={"t_end": 0.5, "output_interval": 0.1, "seed": 9})
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "particle.csv").read_bytes()
    b = (tmp_path / "b" / "particle.csv").read_bytes()
    assert a == b


def test_first_order_drift_within_tolerance(tmp_path):
    res = run_experiment(_cfg("first-order", tolerances={"drift_tol": 1e-3}), tmp_path)
    assert res.ok
    assert res.drift["mass"]["drift"] <= 1e-3
    assert any(p.name.endswith(".snap") for p in tmp_path.iterdir())
    meta = io.read_csv(tmp_path / "first-order.csv").meta
    assert meta["config_hash"] == res.config.digest()


# -- command line -----------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    good = _toml(tmp_path / "good.toml", "scalar")
    assert main(["solve-kinetic", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "scalar.csv").exists()
    meta = io.read_csv(tmp_path / "o" / "scalar.csv").meta
    assert meta["diagnostics"]["mass"]["gated"] is False
    strict = _toml(tmp_path / "strict.toml", "first-order", "[tolerances]\ndrift_tol = 1e-30\n")
    assert main(["solve-kinetic", "--config", str(strict)]) == 2
    bad = _toml(tmp_path / "bad.toml", "scalar", "[grid.extra]\nfoo = 1\n")
    assert main(["solve-kinetic", "--config", str(bad)]) == 3
    assert main(["solve-kinetic", "--config", str(good), "--model", "limit", "--eps", "0.1,0.2"]) == 3
    capsys.readouterr()


def test_cli_particles_to_stdout(tmp_path, capsys):
    cfg = _toml(tmp_path / "p.toml", "particle", "[particle]\nn = 100\n")
    assert main(["simulate-particles", "--config", str(cfg), "--seed", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# ") and "\nt," in out
