"""Closed moment hierarchies, their equilibria and entropy functionals.

Two families live here:

* the discrete coagulation-fragmentation system for the group numbers
  ``M_k`` (unscaled, arbitrary ``kmax``), with the relative entropy with
  respect to a detailed-balance state;
* the pair-level system of the first-order model, where triples are
  quasi-stationary and only ``(M_1, M_2)``, ``(I_1, I_2)`` and the partial
  variances ``(V_1, V_2)`` evolve.

Indices follow the physical group size: ``M[0]`` holds ``M_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .core import Density, RateTable
from .errors import DomainError, NumericalError

__all__ = [
    "MomentState",
    "PairMomentState",
    "mk_rhs",
    "mass_conservation_defect",
    "relative_entropy",
    "entropy_dissipation",
    "constant_rate_equilibrium",
    "pair_mass_rhs",
    "equilibrium_masses",
    "pair_first_moment_rhs",
    "equilibrium_first_moments",
    "pair_variance_rhs",
    "closure_v3",
    "closure_vt3",
    "log_entropy",
    "log_entropy_bound",
    "Trajectory",
    "integrate_ode",
    "quadratic_opinion_spread",
]


@dataclass
class MomentState:
    """Moments of every group size at one time."""

    M: np.ndarray
    I: np.ndarray
    E: np.ndarray
    Vt: np.ndarray
    t: float = 0.0

    def total_mass(self) -> float:
        k = np.arange(1, len(self.M) + 1)
        return float(k @ self.M)


@dataclass
class PairMomentState:
    """Moments of free individuals (index 1) and pairs (index 2)."""

    M1: float
    M2: float
    I1: float = 0.0
    I2: float = 0.0
    V1: float = 0.0
    V2: float = 0.0
    t: float = 0.0

    def total_mass(self, eps: float) -> float:
        return self.M1 + 2 * eps * self.M2

    def total_momentum(self, eps: float) -> float:
        return self.I1 + 2 * eps * self.I2

    def total_variance(self, eps: float) -> float:
        return self.V1 + 2 * eps * self.V2


def _check_length(rates: RateTable, M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 1 or len(M) != rates.kmax:
        raise DomainError(f"expected {rates.kmax} group numbers, got shape {M.shape}")
    return M


def _mk_indices(K: int):
    i, j = np.meshgrid(np.arange(1, K + 1), np.arange(1, K + 1), indexing="ij")
    return i + j, (i + j) <= K


def mk_rhs(rates: RateTable, M) -> np.ndarray:
    """Right-hand side of the truncated coagulation-fragmentation system.

    Gains into sizes above ``kmax`` are dropped while the matching losses are
    kept, so an open rate table leaks mass out of the modelled range.
    """
    M = _check_length(rates, M)
    K = rates.kmax
    lam = rates.lam[1:, 1:]
    mu = rates.mu[1:, 1:]
    size, inside = _mk_indices(K)
    # loss by coagulation with any partner of size <= K
    out = -M * (lam @ M)
    # gain by coagulation: half the sum over i + j = k of lam_ij M_i M_j
    coag = np.where(inside, lam * np.outer(M, M), 0.0)
    out += 0.5 * np.bincount(size.ravel(), coag.ravel(), minlength=K + 2)[1:K + 1]
    # loss by fragmentation: total splitting rate of size k
    split = np.bincount(size.ravel(), np.where(inside, mu, 0.0).ravel(), minlength=K + 2)[1:K + 1]
    out -= 0.5 * split * M
    # gain by fragmentation: size k released from groups of size k + j
    Mpad = np.concatenate([M, np.zeros(K + 1)])
    out += np.sum(np.where(inside, mu * Mpad[size - 1], 0.0), axis=1)
    return out


def mass_conservation_defect(rates: RateTable, M) -> float:
    """``sum_k k * dM_k/dt``; zero unless the truncation leaks."""
    d = mk_rhs(rates, M)
    return float(np.arange(1, rates.kmax + 1) @ d)


def _log_ratio(M: np.ndarray, Minf: np.ndarray) -> np.ndarray:
    if np.any((M <= 0) & (Minf > 0)):
        raise DomainError("relative entropy needs M_k > 0 wherever M_k^inf > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(M > 0, np.log(np.where(M > 0, M, 1.0) / np.where(Minf > 0, Minf, 1.0)), 0.0)


def relative_entropy(M, Minf) -> float:
    """``sum_k M_k log(M_k / M_k^inf) - M_k + M_k^inf`` with ``0 log 0 = 0``."""
    M = np.asarray(M, dtype=float)
    Minf = np.asarray(Minf, dtype=float)
    return float(np.sum(M * _log_ratio(M, Minf) - M + Minf))


def entropy_dissipation(rates: RateTable, M, Minf) -> float:
    """Entropy dissipation for a detailed-balance reference ``Minf``.

    Sums ``-1/2 mu_{j,k} M_{j+k}^inf (u_{j+k} - u_j u_k) log(u_{j+k}/(u_j u_k))``
    over ``j + k <= kmax`` with ``u = M / Minf``.
    """
    M = _check_length(rates, M)
    Minf = np.asarray(Minf, dtype=float)
    _log_ratio(M, Minf)
    K = rates.kmax
    u = M / Minf
    total = 0.0
    for j in range(1, K):
        k = np.arange(1, K - j + 1)
        mu = rates.mu[j, k]
        uprod = u[j - 1] * u[k - 1]
        usum = u[j + k - 1]
        term = mu * Minf[j + k - 1] * (usum - uprod) * (np.log(usum) - np.log(uprod))
        total += float(np.sum(term))
    return -0.5 * total


def constant_rate_equilibrium(lam: float, mu: float, massM: float, kmax: int,
                              tol: float = 1e-16) -> np.ndarray:
    """Detailed-balance state ``M_k = (mu/lam) q**k`` with prescribed mass."""
    if not (lam > 0 and mu > 0 and massM > 0):
        raise DomainError("lam, mu and the mass must be positive")
    ks = np.arange(1, kmax + 1)
    c = mu / lam

    def mass(q):
        return c * float(ks @ q ** ks)

    if kmax == 1:
        return np.array([float(massM)])
    # the mass is increasing in q and unbounded for finite kmax
    hi = 1.0
    while mass(hi) < massM:
        hi *= 2.0
    q = brentq(lambda x: mass(x) - massM, 0.0, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps)
    return c * q ** ks


# --- pair-level system ------------------------------------------------------

def pair_mass_rhs(rates: RateTable, s: PairMomentState) -> tuple[float, float]:
    """``dM1 = mu11 M2 - lam11 M1^2``, ``2 eps dM2 = -dM1``."""
    eps = rates.epsilon
    dM1 = rates.m11 * s.M2 - rates.l11 * s.M1 ** 2
    return dM1, -dM1 / (2 * eps)


def equilibrium_masses(rates: RateTable, massM: float) -> tuple[float, float]:
    if massM < 0:
        raise DomainError("mass must be nonnegative")
    l11, m11, eps = rates.l11, rates.m11, rates.epsilon
    M1 = 2 * massM / (1 + math.sqrt(1 + 8 * l11 * eps * massM / m11))
    return M1, l11 / m11 * M1 ** 2


def pair_first_moment_rhs(rates: RateTable, s: PairMomentState) -> tuple[float, float]:
    eps = rates.epsilon
    dI1 = (rates.m11 * s.I2 - rates.l11 * s.M1 * s.I1
           + 2.0 / 3.0 * eps * rates.l12 * (s.M1 * s.I2 - s.M2 * s.I1))
    return dI1, -dI1 / (2 * eps)


def equilibrium_first_moments(rates: RateTable, M1inf: float, M2inf: float,
                              massM: float, momentI: float) -> tuple[float, float]:
    if massM == 0:
        raise DomainError("the mean opinion is undefined for zero mass")
    l11, m11, l12, eps = rates.l11, rates.m11, rates.l12, rates.epsilon
    I1 = ((3 * m11 + 2 * eps * l12 * M1inf)
          / (3 * m11 + 2 * eps * (3 * l11 * M1inf + l12 * massM)) * momentI)
    I2 = (3 * l11 * M1inf + 2 * eps * l12 * M2inf) / (3 * m11 + 2 * eps * l12 * M1inf) * I1
    return I1, I2


def closure_vt3(rates: RateTable, s: PairMomentState, cross1: float, cross2: float,
                vt2: float) -> float:
    """Pair dispersion of quasi-stationary triples.

    From the triple balance weighted with ``(v1 - v2)**2``; the drift
    contributes ``2 * Vt3`` on the left.
    """
    if rates.l12 == 0:
        return 0.0
    src = rates.l12 / 3.0 * (2 * s.V1 * s.M2 + 2 * s.V2 * s.M1 - 4 * cross1 * cross2 + s.M1 * vt2)
    return src / (rates.m12 + 2.0)


def closure_v3(rates: RateTable, s: PairMomentState, vt3: float) -> float:
    """``mu12 V3 = lam12 (V1 M2 + 2 V2 M1)/3 - 2 Vt3/3``; returns ``mu12 * V3``."""
    return rates.l12 / 3.0 * (s.V1 * s.M2 + 2 * s.V2 * s.M1) - 2.0 / 3.0 * vt3


def pair_variance_rhs(rates: RateTable, s: PairMomentState,
                      cross: tuple[float, float, float]) -> tuple[float, float]:
    """Closed ``(dV1, dV2)`` with triples eliminated.

    ``cross = (I1 - v_inf M1, I2 - v_inf M2, Vt2)``.  The total variance obeys
    ``d(V1 + 2 eps V2)/dt = -Vt2 - 2 eps Vt3``.
    """
    eps = rates.epsilon
    c1, c2, vt2 = cross
    vt3 = closure_vt3(rates, s, c1, c2, vt2)
    mu12V3 = closure_v3(rates, s, vt3)
    l11, m11, l12 = rates.l11, rates.m11, rates.l12
    dV1 = m11 * s.V2 + eps * mu12V3 - l11 * s.M1 * s.V1 - eps * l12 * s.M2 * s.V1
    dV2 = (l11 * s.M1 * s.V1 + 2 * eps * mu12V3 - 2 * eps * l12 * s.M1 * s.V2
           - m11 * s.V2 - vt2) / (2 * eps)
    return dV1, dV2


# --- entropy of the kinetic densities ---------------------------------------

def _xlogx_minus_x(f: np.ndarray, scale: float = 1.0) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(f > 0, f * (np.log(np.where(f > 0, scale * f, 1.0)) - 1.0), 0.0)


def log_entropy(f1: Density, f2: Density, rates: RateTable) -> float:
    """Logarithmic entropy of free individuals and pairs, ``0 log 0 = 0``."""
    h = f1.grid.h
    ratio = rates.m11 / rates.l11
    part1 = float(_xlogx_minus_x(f1.values).sum()) * h
    part2 = float(_xlogx_minus_x(f2.values, ratio).sum()) * h * h
    return part1 + rates.epsilon * part2


def log_entropy_bound(rates: RateTable, M2: float, M3: float) -> float:
    """Upper bound ``M2 + eps M3`` on the entropy growth rate."""
    return M2 + rates.epsilon * M3


def quadratic_opinion_spread(M, I) -> float:
    """``1/2 sum_k k M_k (I_k/M_k - v_inf)**2``: spread of group-average opinions."""
    M = np.asarray(M, dtype=float)
    I = np.asarray(I, dtype=float)
    k = np.arange(1, len(M) + 1)
    v_inf = float(k @ I) / float(k @ M)
    mask = M > 0
    vbar = np.where(mask, I / np.where(mask, M, 1.0), v_inf)
    return 0.5 * float(np.sum(k * M * (vbar - v_inf) ** 2))


# --- integrator -------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.t - t)))
        return self.y[i]


def integrate_ode(rhs: Callable[[float, np.ndarray], np.ndarray], y0, t_end: float,
                  dt: float, record_every: int = 1) -> Trajectory:
    """Classical fixed-step RK4 from ``t = 0`` to ``t_end``.

    ``rhs(t, y)`` returns ``dy/dt``.  Stiff components need ``dt`` well below
    their time scale (for the pair system ``dt <= eps/2``).
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    y = np.array(y0, dtype=float)
    nsteps = int(round(t_end / dt))
    if abs(nsteps * dt - t_end) > 1e-9 * max(1.0, t_end):
        nsteps = int(math.ceil(t_end / dt))
    ts = [0.0]
    ys = [y.copy()]
    t = 0.0
    for n in range(nsteps):
        h = min(dt, t_end - t) if n == nsteps - 1 else dt
        h2 = 0.5 * h
        k1 = rhs(t, y)
        k2 = rhs(t + h2, y + h2 * k1)
        k3 = rhs(t + h2, y + h2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * (k2 + k3) + k4)
        t = (n + 1) * dt if n < nsteps - 1 else t_end
        if (n + 1) % record_every == 0 or n == nsteps - 1:
            # non-finite values persist once they appear, so checking here suffices
            if not np.all(np.isfinite(y)):
                raise NumericalError(f"non-finite state by t={t:.6g} (step {n + 1})")
            ts.append(t)
            ys.append(y.copy())
    return Trajectory(np.array(ts), np.array(ys))
