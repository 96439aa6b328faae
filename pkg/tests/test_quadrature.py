from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alignkin.errors import DomainError
from alignkin.kinetic.quadrature import duration_rule


@settings(max_examples=40, deadline=None)
@given(rate=st.floats(0.1, 10.0), cut=st.one_of(st.just(math.inf), st.floats(0.5, 20.0)))
def test_weights_sum_to_law_mass(rate, cut):
    rule = duration_rule(rate, 16, cut)
    expect = 1.0 - (math.exp(-rate * cut) if math.isfinite(cut) else 0.0)
    assert rule.weights.sum() == pytest.approx(expect, rel=1e-13)
    assert rule.tail == pytest.approx(1.0 - expect, abs=1e-15)
    assert np.all(rule.weights > 0) and np.all(rule.sigma >= 0)
    assert np.all(rule.sigma <= cut * (1 + 1e-12))


@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0, 4.5])
def test_exact_for_powers_of_contraction(rate):
    # E[a**m] = rate / (rate + m) for the exponential law with a = exp(-sigma)
    rule = duration_rule(rate, 32)
    for m in range(0, 6):
        assert rule.integrate(rule.contraction ** m) == pytest.approx(rate / (rate + m), rel=1e-10)


def test_mean_duration():
    rule = duration_rule(2.0, 32)
    assert rule.integrate(rule.sigma) == pytest.approx(0.5, rel=1e-4)


def test_invalid_rules():
    with pytest.raises(DomainError):
        duration_rule(0.0)
    with pytest.raises(DomainError):
        duration_rule(1.0, 8, -1.0)
