from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from alignkin import particle as pt
from alignkin.core import RateTable
from alignkin.errors import AbsorbingState, ConfigurationError

RATES = RateTable.three_species(1.0, 4.0, 0.5, 1.0, 0.2)


def _config(seed=3, **kw):
    base = dict(n=200, rates=RATES, t_end=1.0, dt_out=0.25, seed=seed, kmax_obs=3)
    base.update(kw)
    return pt.ParticleConfig(**base)


def test_runs_are_deterministic():
    a = pt.run(_config())
    b = pt.run(_config())
    c = pt.run(_config(seed=4))
    assert a.rows == b.rows
    assert a.rows != c.rows
    assert len(a.rows) == 5


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), scaled=st.booleans())
def test_events_preserve_individuals_and_mean(seed, scaled):
    rng = np.random.default_rng(seed)
    e = pt.sample_initial(60, [{"kind": "uniform", "low": -1, "high": 1}], rng, pair_fraction=0.5)
    mean0 = e.all_velocities().mean()
    for _ in range(200):
        pt.step_event(e, RATES, rng, scaled)
    assert e.n_individuals == 60
    assert e.all_velocities().mean() == pytest.approx(mean0, abs=1e-12)
    assert e.max_size() <= RATES.kmax


def test_propensities_by_hand():
    e = pt.Ensemble([[0.0], [1.0], [2.0], [0.0, 1.0], [3.0, 4.0, 5.0]], omega=2.0)
    coag, frag, total = pt.propensities(e, RATES)
    # three singletons: 3 pairs; singleton with pair: 3 * 1 pairs
    assert coag[0, 0] == pytest.approx(RATES.l11 * 3 / 2.0)
    assert coag[0, 1] == pytest.approx(RATES.l12 * 3 / 2.0)
    assert coag[1, 1] == 0.0
    assert frag[1] == pytest.approx(0.5 * RATES.m11)
    assert frag[2] == pytest.approx(RATES.m12)
    assert total == pytest.approx(coag.sum() + frag.sum())
    _, frag_s, _ = pt.propensities(e, RATES, scaled=True)
    assert np.allclose(frag_s, frag / RATES.epsilon)


def test_split_sizes_follow_rates():
    # for size 4 the ordered split sizes j = 1, 2, 3 carry weights mu(1,3), mu(2,2), mu(3,1)
    mu = np.zeros((5, 5))
    mu[1, 3] = mu[3, 1] = 1.0
    mu[2, 2] = 2.0
    rates = RateTable(np.zeros((5, 5)), mu)
    rng = np.random.default_rng(11)
    counts = np.zeros(3)
    for _ in range(4000):
        e = pt.Ensemble([[0.0, 1.0, 2.0, 3.0]])
        j, _ = pt._fragment(e, 4, rng, rates)
        counts[j - 1] += 1
    expected = np.array([0.25, 0.5, 0.25]) * counts.sum()
    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_waiting_times_exponential():
    rng = np.random.default_rng(5)
    waits = []
    for _ in range(2000):
        e = pt.Ensemble([[0.0, 1.0], [2.0], [3.0]], omega=3.0)
        _, _, total = pt.propensities(e, RATES)
        pt.step_event(e, RATES, rng)
        waits.append(e.t)
    assert stats.kstest(waits, "expon", args=(0, 1.0 / total)).pvalue > 1e-3


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=3), st.floats(0, 5), st.booleans())
def test_drift_is_the_exact_alignment_flow(v, dt, scaled):
    v = np.array(v)
    e = pt.Ensemble([v])
    pt.advance_drift(e, dt, scaled, epsilon=0.5)
    theta = dt / 0.5 if scaled else dt
    expect = v.mean() + math.exp(-theta) * (v - v.mean())
    out = e.groups()[0]
    assert np.allclose(out, expect, atol=1e-12)
    assert ((out - v.mean()) ** 2).sum() <= ((v - v.mean()) ** 2).sum() + 1e-12


def test_drift_check_reports_no_increase():
    s = pt.run(_config(check_drift=True, pair_fraction=0.5))
    assert s.meta["max_drift_increase"] <= 1e-12


def test_observable_identities():
    e = pt.Ensemble([[0.0], [1.0], [0.0, 2.0], [1.0, 2.0, 3.0]], omega=1.0)
    obs = pt.observables(e, 3, v_inf=1.0)
    assert np.allclose(obs.M, [2, 1, 1])
    assert obs.V == pytest.approx(np.dot(np.arange(1, 4), obs.Vk))
    # ordered-pair mean of (va - vb)^2 for [0, 2] and [1, 2, 3]
    assert obs.Vt[1] == pytest.approx(4.0)
    assert obs.Vt[2] == pytest.approx((1 + 4 + 1) * 2 / 6)


def test_absorbing_state_and_table_overflow():
    closed = RateTable(np.zeros_like(RATES.lam), np.zeros_like(RATES.mu))
    with pytest.raises(AbsorbingState):
        pt.step_event(pt.Ensemble([[0.0], [1.0]]), closed, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        pt.propensities(pt.Ensemble([[0.0] * 5]), RATES)
    # absorption is not an error for a full run: the remaining time is pure drift
    frag_only = RateTable(np.zeros_like(RATES.lam), RATES.mu)
    s = pt.run(_config(rates=frag_only, pair_fraction=1.0, t_end=12.0, dt_out=4.0))
    assert s.rows[-1]["M2"] == 0.0
