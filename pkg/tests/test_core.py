from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from alignkin.core import (
    Density,
    DurationWeight,
    RateTable,
    VelocityGrid,
    duration_density,
    interaction_field,
    phi_jacobian_det,
    phi_map,
    sym_tensor,
    symmetrize,
)
from alignkin.errors import ConfigurationError, DomainError

finite = st.floats(-50, 50, allow_nan=False)
durations = st.floats(0, 10, allow_nan=False)


def groups(k):
    return arrays(np.float64, (k,), elements=finite)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(2, 5), data=st.data(), s=durations, r=durations)
def test_flow_property(k, data, s, r):
    v = data.draw(groups(k))
    lhs = phi_map(r, phi_map(s, v))
    assert np.allclose(lhs, phi_map(s + r, v), atol=1e-11, rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(2, 5), data=st.data(), s=durations)
def test_inverse_and_mean(k, data, s):
    v = data.draw(groups(k))
    out = phi_map(s, v)
    assert np.allclose(phi_map(-s, out), v, atol=1e-9 * math.exp(s))
    assert out.mean() == pytest.approx(v.mean(), abs=1e-11)
    # contraction of the spread
    assert np.ptp(out) <= np.ptp(v) * (1 + 1e-12) + 1e-12


def test_phi_map_matches_ode_solution():
    # d/ds v = interaction_field(v), integrated with tiny RK4 steps
    v = np.array([1.0, -2.0, 0.5])
    y = v.copy()
    h = 1e-3
    for _ in range(1000):
        k1 = interaction_field(y)
        k2 = interaction_field(y + h / 2 * k1)
        k3 = interaction_field(y + h / 2 * k2)
        k4 = interaction_field(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert np.allclose(y, phi_map(1.0, v), atol=1e-12)


def test_phi_map_batches():
    v = np.arange(12.0).reshape(4, 3)
    s = np.array([0.0, 0.5, 1.0, 2.0])
    out = phi_map(s, v)
    for q in range(4):
        assert np.allclose(out[q], phi_map(s[q], v[q]))


def test_phi_map_rejects_singletons():
    with pytest.raises(DomainError):
        phi_map(1.0, np.array([1.0]))


@pytest.mark.parametrize("k", [2, 3, 4])
def test_jacobian_against_finite_differences(k):
    s = 0.7
    x = np.linspace(-1, 1, k)
    d = 1e-6
    J = np.column_stack([(phi_map(s, x + d * e) - phi_map(s, x - d * e)) / (2 * d) for e in np.eye(k)])
    assert np.linalg.det(J) == pytest.approx(phi_jacobian_det(k, s), rel=1e-6)


def test_duration_density_normalised():
    x, w = np.polynomial.laguerre.laggauss(30)
    for mu in (0.3, 1.0, 7.0):
        total = np.sum(w * np.exp(x) * duration_density(mu, 2 * x / mu)) * 2 / mu
        assert total == pytest.approx(1.0, abs=1e-12)
    assert DurationWeight(4.0).mean == pytest.approx(0.5)
    with pytest.raises(DomainError):
        duration_density(1.0, -0.1)


def test_rate_table_validation():
    with pytest.raises(DomainError):
        RateTable(np.array([[0, 0], [0, -1.0]]), np.zeros((2, 2)))
    lam = np.zeros((3, 3))
    lam[1, 2] = 1.0
    with pytest.raises(DomainError):
        RateTable(lam, np.zeros((3, 3)))
    with pytest.raises(ConfigurationError):
        RateTable(np.zeros((3, 3)), np.zeros((2, 2)))
    with pytest.raises(DomainError):
        RateTable.three_species(1, 1, epsilon=0.0)


def test_rate_table_accessors():
    r = RateTable.three_species(1.0, 4.0, 0.5, 2.0, 0.1)
    assert (r.l11, r.m11, r.l12, r.m12, r.epsilon, r.kmax) == (1.0, 4.0, 0.5, 2.0, 0.1, 3)
    assert r.with_epsilon(0.2).epsilon == 0.2
    closed = RateTable.constant(1.0, 1.0, 4, closed=True)
    assert closed.lam[2, 3] == 0 and closed.lam[2, 2] == 1.0
    assert RateTable.constant(1.0, 1.0, 4, closed=False).lam[2, 3] == 1.0


def test_grid_and_density():
    g = VelocityGrid(-1.0, 1.0, 4)
    assert g.h == 0.5
    assert np.allclose(g.centers, [-0.75, -0.25, 0.25, 0.75])
    assert len(g.edges) == 5
    d = Density(g, np.ones(4))
    assert d.mass() == pytest.approx(2.0)
    assert d.first_moment() == pytest.approx(0.0)
    with pytest.raises(DomainError):
        Density(g, -np.ones(4))
    z = Density.zeros(g, 2)
    assert z.values.shape == (4, 4) and z.is_symmetric()


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4, 4, 4), elements=st.floats(0, 1)))
def test_symmetrize_is_projection(a):
    s = symmetrize(a)
    assert np.allclose(s, np.transpose(s, (1, 0, 2)))
    assert np.allclose(s, np.transpose(s, (2, 1, 0)))
    assert np.allclose(symmetrize(s), s)
    assert s.sum() == pytest.approx(a.sum())


def test_sym_tensor():
    g = VelocityGrid(-1.0, 1.0, 5)
    f1 = Density(g, np.arange(1.0, 6.0))
    f2 = Density(g, symmetrize(np.outer(np.arange(5.0), np.ones(5))))
    t = sym_tensor(f1, f2)
    assert t.is_symmetric(rtol=1e-12)
    assert t.mass() == pytest.approx(f1.mass() * f2.mass())
