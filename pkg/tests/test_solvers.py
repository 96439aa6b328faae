from __future__ import annotations

import numpy as np
import pytest

from alignkin.core import Density, RateTable, VelocityGrid
from alignkin.errors import ConfigurationError, DomainError, NumericalError
from alignkin.kinetic import operators as op
from alignkin.kinetic.solvers import SolverOptions, make_solver

GRID = VelocityGrid(-6.0, 6.0, 32)
RATES = RateTable.three_species(1.0, 4.0, 0.5, 1.0, 0.2)


def gaussian_f1(grid=GRID, mean=0.5, sd=0.5):
    v = grid.centers
    f = np.exp(-0.5 * ((v - mean) / sd) ** 2)
    return Density(grid, f / (f.sum() * grid.h))


def _run(model, dt, t_end, grid=GRID, rates=RATES):
    opts = SolverOptions(dt=dt, n_sigma=16, n_rho=4)
    solver = make_solver(model, grid, rates, gaussian_f1(grid), None, opts)
    return solver, solver.run(t_end, record_every=dt)


def _column(series, name):
    return np.array([row[name] for row in series.rows])


@pytest.mark.parametrize("model,dt", [("limit", 0.01), ("first-order", 0.025)])
def test_short_runs_conserve(model, dt):
    solver, series = _run(model, dt, 0.5)
    mass = _column(series, "mass")
    tol = 1e-10 if model == "limit" else 1e-3
    assert np.abs(mass - mass[0]).max() < tol
    if "momentum" in series.rows[0]:
        mom = _column(series, "momentum")
        assert np.abs(mom - mom[0]).max() < tol
    assert _column(series, "leaked")[-1] < 1e-8
    assert series.rows[-1]["t"] == pytest.approx(0.5)
    fields = solver.fields()
    assert all(np.all(np.isfinite(v)) for v in fields.values())


def test_scalar_mass_follows_rate_identity():
    # the scalar model conserves mass only up to higher order; the drift
    # matches the exchange with the correlated pairs
    _, series = _run("scalar", 0.025, 0.5)
    t, mass = _column(series, "t"), _column(series, "mass")
    rate = _column(series, "mass_rate_identity")
    late = t > 0.25
    assert np.allclose(np.gradient(mass, t)[late], rate[late], rtol=0.05, atol=1e-5)
    assert _column(series, "leaked")[-1] < 1e-8


def test_limit_variance_decreases():
    _, series = _run("limit", 0.01, 1.0)
    var = _column(series, "variance")
    assert np.all(np.diff(var) <= 1e-12)
    assert var[-1] < 0.99 * var[0]


def test_reference_short_run():
    g = VelocityGrid(-3.0, 3.0, 10)
    solver, series = _run("reference", 0.002, 0.05, grid=g)
    mass = _column(series, "mass")
    assert np.abs(mass - mass[0]).max() < 1e-10
    assert solver.fields()["f3"].shape == (10, 10, 10)


def test_reference_cfl_violation():
    g = VelocityGrid(-3.0, 3.0, 10)
    with pytest.raises(NumericalError, match="CFL"):
        make_solver("reference", g, RATES, gaussian_f1(g), None, SolverOptions(dt=0.1))


def test_first_order_pair_density_symmetric_and_snapshots():
    solver = make_solver("first-order", GRID, RATES, gaussian_f1(), None,
                         SolverOptions(dt=0.025, n_sigma=16, n_rho=4))
    series = solver.run(0.25, record_every=0.05, snapshot_times=[0.1, 0.25])
    f2 = solver.fields()["f2"]
    assert np.allclose(f2, f2.T)
    assert [s["t"] for s in series.snapshots] == pytest.approx([0.1, 0.25])
    assert len(series.rows) == 6


def test_scalar_pair_reconstruction():
    solver, _ = _run("scalar", 0.025, 0.3)
    f2 = solver.f2_as()
    assert f2.is_symmetric(rtol=1e-10)
    assert f2.mass() > 0


def test_setup_errors():
    other = VelocityGrid(-1.0, 1.0, 8)
    with pytest.raises(ConfigurationError):
        make_solver("limit", GRID, RATES, gaussian_f1(other))
    with pytest.raises(ConfigurationError):
        make_solver("nope", GRID, RATES, gaussian_f1())
    with pytest.raises(DomainError):
        make_solver("scalar", GRID, RateTable(RATES.lam, RATES.mu, 0.0), gaussian_f1())
    with pytest.raises(ConfigurationError):
        SolverOptions(dt=-1.0).resolve_dt(0.1, True)


def test_leak_detected_on_narrow_grid():
    g = VelocityGrid(-0.6, 0.6, 12)
    f1 = Density(g, np.ones(12) / 1.2)
    f1.values[-1] = 50.0
    solver = make_solver("scalar", g, RATES, f1, None, SolverOptions(dt=0.02, n_sigma=8, leak_tol=1e-14))
    try:
        solver.run(0.2)
    except NumericalError as exc:
        assert "leaked" in str(exc)
    else:
        assert solver.leaked <= 1e-14 * solver.total_mass0()
