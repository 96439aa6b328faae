"""Quadrature over collision durations.

Every duration integral in the solvers has the form

    int_0^{sigma_cut} r exp(-r sigma) g(sigma) dsigma

with a decay rate ``r`` (``mu11/2`` for pairs, ``mu12`` for triples).  The
substitution ``a = exp(-sigma)`` (the contraction factor of the alignment
flow) turns this into ``int_{a_cut}^1 r a**(r-1) g(-log a) da``.  Deposition
positions are affine in ``a``, so Gauss-Legendre in ``a`` is the natural
rule; the exponential growth of the gain integrand never appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import DomainError

__all__ = ["SemigroupQuadrature", "duration_rule"]


@dataclass(frozen=True)
class SemigroupQuadrature:
    """Nodes ``sigma`` and weights of the exponential duration law.

    ``weights.sum()`` equals ``1 - exp(-rate * sigma_cut)`` exactly, so mass
    bookkeeping built on these weights is exact up to round-off.
    """

    rate: float
    sigma: np.ndarray
    weights: np.ndarray
    sigma_cut: float

    @property
    def contraction(self) -> np.ndarray:
        return np.exp(-self.sigma)

    @property
    def tail(self) -> float:
        """Probability mass beyond ``sigma_cut``."""
        return math.exp(-self.rate * self.sigma_cut) if math.isfinite(self.sigma_cut) else 0.0

    def integrate(self, values) -> float:
        """Quadrature of ``g`` given its values at the nodes."""
        return float(np.dot(self.weights, values))

    @property
    def n_sigma(self) -> int:
        return len(self.sigma)

    def tail_bound(self) -> float:
        return self.tail


@lru_cache(maxsize=32)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def duration_rule(rate: float, n_sigma: int = 32, sigma_cut: float = math.inf) -> SemigroupQuadrature:
    """Gauss rule for ``r exp(-r sigma)`` on ``[0, sigma_cut]``.

    Uses Gauss-Legendre in ``a = exp(-sigma)`` for ``rate >= 1`` and in
    ``y = exp(-rate sigma)`` otherwise (where ``a**(rate-1)`` is singular).
    """
    if not rate > 0:
        raise DomainError("decay rate must be positive")
    if sigma_cut <= 0:
        raise DomainError("sigma_cut must be positive")
    x, w = _legendre(int(n_sigma))
    if rate >= 1.0:
        a_lo = math.exp(-sigma_cut) if math.isfinite(sigma_cut) else 0.0
        a = a_lo + (x + 1) * 0.5 * (1 - a_lo)
        weights = w * 0.5 * (1 - a_lo) * rate * a ** (rate - 1)
        sigma = -np.log(a)
    else:
        y_lo = math.exp(-rate * sigma_cut) if math.isfinite(sigma_cut) else 0.0
        y = y_lo + (x + 1) * 0.5 * (1 - y_lo)
        weights = w * 0.5 * (1 - y_lo)
        sigma = -np.log(y) / rate
    exact = 1.0 - (math.exp(-rate * sigma_cut) if math.isfinite(sigma_cut) else 0.0)
    weights = weights * (exact / weights.sum())
    return SemigroupQuadrature(float(rate), sigma, weights, float(sigma_cut))
