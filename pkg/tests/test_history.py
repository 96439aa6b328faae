from __future__ import annotations

import numpy as np
import pytest

from alignkin.errors import ConfigurationError
from alignkin.kinetic.history import HistoryBuffer


def _filled(span=None, min_spacing=0.0, n=11):
    h = HistoryBuffer(span=span, min_spacing=min_spacing)
    for t in np.linspace(0.0, 1.0, n):
        h.append(float(t), np.array([t, 2 * t]), m1=1.0 + t)
    return h


def test_linear_interpolation_is_exact_for_linear_data():
    h = _filled()
    taus = np.array([0.0, 0.13, 0.5, 0.77, 1.0])
    out = h.sample(taus)
    assert np.allclose(out[:, 0], taus) and np.allclose(out[:, 1], 2 * taus)


def test_head_extends_buffer():
    h = _filled()
    out = h.sample([1.05], head=(1.1, np.array([1.1, 2.2]), 2.1))
    assert np.allclose(out[0], [1.05, 2.1])
    assert h.cumulative_head((1.1, None, 2.1)) == pytest.approx(1.1 + 1.1 ** 2 / 2)


def test_cumulative_integral_of_m1():
    h = _filled()
    # trapezoid is exact for linear M1 = 1 + t
    taus = np.array([0.0, 0.5, 1.0])
    assert np.allclose(h.cumulative(taus), taus + taus ** 2 / 2)
    assert h.cumulative_head() == pytest.approx(1.5)


def test_thinning_keeps_the_integral():
    h = _filled(min_spacing=0.25, n=101)
    assert len(h) < 20
    assert h.t_last == pytest.approx(1.0)
    assert h.cumulative_head() == pytest.approx(1.5, rel=1e-12)
    assert np.allclose(h.sample([0.6])[0], [0.6, 1.2])


def test_span_trims_but_keeps_window_edge():
    h = _filled(span=0.3, n=101)
    assert h.t_first <= 0.7 + 1e-12
    assert h.t_first > 0.5
    h.sample([0.7])
    with pytest.raises(ConfigurationError):
        h.sample([0.2])


def test_ordering_and_range_errors():
    h = _filled()
    with pytest.raises(ConfigurationError):
        h.append(0.5, np.zeros(2))
    with pytest.raises(ConfigurationError):
        h.sample([1.5])
    with pytest.raises(ConfigurationError):
        h.sample([0.5], head=(0.9, np.zeros(2), 0.0))
