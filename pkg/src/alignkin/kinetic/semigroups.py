"""Semi-Lagrangian (pullback) form of the pair and triple semigroups.

``(S_20(sigma) h)(v) = exp((1 - mu11/2) sigma) h(Phi_2^{-sigma}(v))`` and
``(S_3(sigma) h)(v) = exp((2 - mu12) sigma) h(Phi_3^{-sigma}(v))``.

The pre-collisional point ``Phi^{-sigma}(v)`` moves away from the diagonal
by ``exp(sigma)``; it is evaluated by multilinear interpolation with zero
outside the grid.  The mass lost that way is reported as ``leak``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import map_coordinates

from ..core import Density, RateTable, phi_map, symmetrize
from ..errors import ConfigurationError, DomainError
from .history import HistoryBuffer

__all__ = ["pullback", "apply_s20", "apply_s2eps", "apply_s3"]


def pullback(h: Density, sigma: float) -> Density:
    """``h(Phi_k^{-sigma}(v))`` at every cell centre, multilinear, zero outside."""
    grid = h.grid
    k = h.k
    if k < 2:
        raise DomainError("pullback needs a pair or triple density")
    mesh = np.meshgrid(*([grid.centers] * k), indexing="ij")
    pts = np.stack(mesh, axis=-1)
    pre = phi_map(-sigma, pts)
    coords = (np.moveaxis(pre, -1, 0) - grid.first_center) / grid.h
    vals = map_coordinates(h.values, coords, order=1, mode="constant", cval=0.0)
    vals = np.maximum(vals, 0.0)
    return Density(grid, symmetrize(vals))


def _with_leak(h: Density, out_vals: np.ndarray, expected_mass: float) -> tuple[Density, float]:
    out = Density(h.grid, out_vals)
    return out, max(0.0, expected_mass - out.mass())


def apply_s20(h: Density, sigma: float, rates: RateTable) -> tuple[Density, float]:
    """Pair semigroup; returns ``(S_20(sigma) h, leaked_mass)``.

    The exact mass of the result is ``exp(-mu11 sigma / 2) * mass(h)``; the
    shortfall of the interpolated result is the leak.
    """
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if h.k != 2:
        raise ConfigurationError("apply_s20 acts on pair densities")
    if sigma == 0:
        return h, 0.0
    pulled = pullback(h, sigma)
    factor = math.exp((1 - rates.m11 / 2) * sigma)
    return _with_leak(h, pulled.values * factor, math.exp(-rates.m11 * sigma / 2) * h.mass())


def apply_s2eps(h: Density, sigma: float, tau: float, rates: RateTable,
                m1_history: HistoryBuffer) -> tuple[Density, float]:
    """Pair semigroup in fast variables between ``sigma <= tau``.

    Adds the loss ``exp(-lam12 int_{eps sigma}^{eps tau} M1 dr)`` from the
    cumulative ``M1`` integral stored in ``m1_history``.
    """
    if sigma > tau:
        raise DomainError("apply_s2eps needs sigma <= tau")
    eps = rates.epsilon
    if sigma == tau:
        return h, 0.0
    out, leak = apply_s20(h, tau - sigma, rates)
    if rates.l12 == 0:
        return out, leak
    c = m1_history.cumulative([eps * sigma, eps * tau])
    loss = math.exp(-rates.l12 * (c[1] - c[0]))
    return Density(h.grid, out.values * loss), leak * loss


def apply_s3(h: Density, sigma: float, rates: RateTable) -> tuple[Density, float]:
    """Triple semigroup; exact mass factor ``exp(-mu12 sigma)``."""
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if h.k != 3:
        raise ConfigurationError("apply_s3 acts on triple densities")
    if sigma == 0:
        return h, 0.0
    pulled = pullback(h, sigma)
    factor = math.exp((2 - rates.m12) * sigma)
    return _with_leak(h, pulled.values * factor, math.exp(-rates.m12 * sigma) * h.mass())
