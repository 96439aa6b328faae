"""Collision operators of the kinetic model hierarchy.

All semigroup integrals are evaluated in weak (pushforward) form.  For a
test function ``g`` and the pair semigroup,

    int g S_20(sigma) h = exp(-mu11 sigma / 2) int g(Phi^sigma(w)) h(w) dw,

so a duration integral becomes a weighted sum over quadrature nodes of cell
masses transported forward by the contraction ``a = exp(-sigma)`` and
deposited with cloud-in-cell weights (see :mod:`.deposit`).  The transported
points are convex combinations of grid points, which keeps every deposit
inside the grid and makes mass and first moments exact.

Arrays called ``m...`` hold cell masses (values times ``h**k``); functions
returning rates of change return cell values (not :class:`Density`, since
they are signed).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from ..core import Density, RateTable, VelocityGrid, symmetrize
from ..errors import ConfigurationError, DomainError
from . import deposit
from .history import HistoryBuffer
from .quadrature import SemigroupQuadrature, duration_rule

__all__ = [
    "masses",
    "from_masses",
    "pair_rule",
    "triple_rule",
    "f2_limit",
    "f2_zero",
    "q_limit",
    "three_body_masses",
    "drift_divergence",
    "rhs_first_order",
    "rhs_reference",
    "delayed_pair_masses",
    "q2_delayed",
    "q3_ternary",
    "rhs_scalar",
    "f2_as",
    "correlated_mass",
    "f1_derivative_bound",
    "KineticState",
]

N_SIGMA = 32
N_RHO = 8


class KineticState:
    """Grid state of a kinetic model: ``f1``, ``f2`` and (model A) ``f3``."""

    __slots__ = ("f1", "f2", "f3", "t")

    def __init__(self, f1: Density, f2: Density | None = None, f3: Density | None = None,
                 t: float = 0.0):
        self.f1 = f1
        self.f2 = f2
        self.f3 = f3
        self.t = float(t)

    @property
    def grid(self) -> VelocityGrid:
        return self.f1.grid

    def copy(self) -> "KineticState":
        return KineticState(self.f1, self.f2, self.f3, self.t)


def masses(d: Density) -> np.ndarray:
    return d.values * d.grid.h ** d.k


def from_masses(grid: VelocityGrid, m: np.ndarray) -> Density:
    return Density(grid, np.maximum(m, 0.0) / grid.h ** m.ndim)


def pair_rule(rates: RateTable, n_sigma: int = N_SIGMA, sigma_cut: float = np.inf) -> SemigroupQuadrature:
    """Duration rule of binary collisions (decay rate ``mu11/2``)."""
    if rates.m11 <= 0:
        raise DomainError("binary collisions need mu11 > 0")
    return duration_rule(rates.m11 / 2, n_sigma, sigma_cut)


def triple_rule(rates: RateTable, n_rho: int = N_RHO) -> SemigroupQuadrature:
    if rates.m12 <= 0:
        raise DomainError("ternary collisions need mu12 > 0")
    return duration_rule(rates.m12, n_rho)


def _pair_p(rule: SemigroupQuadrature) -> np.ndarray:
    return 0.5 * (1.0 + rule.contraction)


def _conv_len(n: int) -> int:
    # every deposited index is <= n - 1 and cloud-in-cell spreads by one
    # cell, so sums of two clouds stay below n + 2: no circular wrap-around
    return sfft.next_fast_len(n + 2, real=True)


def _push_products(A: np.ndarray, w: np.ndarray, p: np.ndarray, dim: int) -> tuple[np.ndarray, float]:
    K, n = A.shape
    A = np.ascontiguousarray(A, dtype=float)
    w = np.asarray(w, float)
    p = np.asarray(p, float)
    if dim == 2:
        out = np.zeros((n, n))
        leak = deposit.pair_product_2d(out, A, w, p)
        return symmetrize(out), leak
    # v1 = p i + (1 - p) j is a sum of two scaled clouds: convolve them
    N = _conv_len(n)
    idx = np.arange(n, dtype=float)
    c1 = np.zeros((K, n))
    c2 = np.zeros((K, n))
    for k in range(K):
        deposit.deposit_1d(c1[k], p[k] * idx, A[k])
        deposit.deposit_1d(c2[k], (1 - p[k]) * idx, A[k])
    spec = w @ (sfft.rfft(c1, N, axis=1) * sfft.rfft(c2, N, axis=1))
    full = sfft.irfft(spec, N)
    out = np.maximum(full[:n], 0.0)
    return out, max(0.0, float(w @ A.sum(axis=1) ** 2) - out.sum())


def _push_pairs(G: np.ndarray, w: np.ndarray, p: np.ndarray, dim: int) -> tuple[np.ndarray, float]:
    n = G.shape[1]
    G = np.ascontiguousarray(G, dtype=float)
    if dim == 2:
        out = np.zeros((n, n))
        leak = deposit.pair_general_2d(out, G, np.asarray(w, float), np.asarray(p, float))
        return symmetrize(out), leak
    out = np.zeros(n)
    return out, deposit.pair_general_1d(out, G, np.asarray(w, float), np.asarray(p, float))


# -- instantaneous limit --------------------------------------------------------

def f2_limit_masses(m1: np.ndarray, rates: RateTable, rule: SemigroupQuadrature | None = None,
                    dim: int = 2) -> tuple[np.ndarray, float]:
    """Masses of ``(lam11/2) int S_20(sigma) (f1 x f1) dsigma`` (or its marginal)."""
    rule = rule or pair_rule(rates)
    A = np.broadcast_to(m1, (rule.n_sigma, len(m1)))
    return _push_products(A, rates.l11 / rates.m11 * rule.weights, _pair_p(rule), dim)


def f2_limit(f1: Density, rates: RateTable, n_sigma: int = N_SIGMA) -> Density:
    """Quasi-stationary pair density ``f2^0`` built from ``f1``."""
    m, _ = f2_limit_masses(masses(f1), rates, pair_rule(rates, n_sigma))
    return from_masses(f1.grid, m)


f2_zero = f2_limit


def q_limit(f1: Density, rates: RateTable, n_sigma: int = N_SIGMA) -> np.ndarray:
    """Binary alignment operator of the instantaneous limit (cell values).

    Gain: ``lam11 int b(sigma) [Phi^sigma pushforward of f1 x f1] dsigma``
    marginalised in ``v2``; loss ``lam11 M1 f1``.
    """
    m1 = masses(f1)
    rule = pair_rule(rates, n_sigma)
    A = np.broadcast_to(m1, (rule.n_sigma, len(m1)))
    gain, _ = _push_products(A, rates.l11 * rule.weights, _pair_p(rule), 1)
    return (gain - rates.l11 * m1.sum() * m1) / f1.grid.h


# -- three-body term ------------------------------------------------------------

@lru_cache(maxsize=8)
def _triple_index(n: int):
    idx = np.arange(n, dtype=float)
    J, L = np.meshgrid(idx, idx, indexing="ij")
    return idx, J.ravel(), L.ravel(), _conv_len(n)


def three_body_masses(m1: np.ndarray, m2: np.ndarray, rule: SemigroupQuadrature) -> tuple[np.ndarray, float]:
    """``sum_k w_k`` (v1,v2)-marginal of the pushforward of ``f1 (.) f2`` masses.

    A triple ``(i, j, l)`` contracts to ``x = mean + a (w - mean)``, i.e.
    ``x_1 = c i + d (j + l)`` with ``c = (1 + 2a)/3`` and ``d = (1 - a)/3``.
    For the product ``f1(i) f2(j, l)`` the image splits into a point that
    depends only on ``i`` plus one that depends only on ``(j, l)``, so each of
    the three terms of the symmetric product is a 2-D convolution of two
    deposited clouds.  Spectra are accumulated over nodes and inverted once.
    Total weight ``sum_k w_k`` multiplies ``M1 M2``.
    """
    n = len(m1)
    idx, J, L, N = _triple_index(n)
    shape = (N, N)
    S1 = np.zeros((N, N // 2 + 1), dtype=complex)
    S3 = np.zeros_like(S1)
    m2f = np.ascontiguousarray(m2, dtype=float).ravel()
    m1 = np.ascontiguousarray(m1, dtype=float)
    leak = 0.0
    for a, w in zip(rule.contraction, rule.weights):
        c = (1 + 2 * a) / 3
        d = (1 - a) / 3
        P1 = np.zeros((n, n))
        L1 = np.zeros((n, n))
        P3 = np.zeros((n, n))
        L3 = np.zeros((n, n))
        leak += deposit.deposit_2d(P1, d * (J + L), c * J + d * L, m2f)
        leak += deposit.deposit_2d(L1, c * idx, d * idx, m1)
        leak += deposit.deposit_2d(P3, c * J + d * L, d * J + c * L, m2f)
        leak += deposit.deposit_2d(L3, d * idx, d * idx, m1)
        S1 += w * sfft.rfft2(P1, shape) * sfft.rfft2(L1, shape)
        S3 += w * sfft.rfft2(P3, shape) * sfft.rfft2(L3, shape)
    T1 = sfft.irfft2(S1, shape)
    T3 = sfft.irfft2(S3, shape)
    full = (T1 + T1.T + T3) / 3.0
    out = np.maximum(full[:n, :n], 0.0)
    expected = rule.weights.sum() * m1.sum() * m2f.sum()
    leak = max(0.0, expected - out.sum())
    return symmetrize(out), leak


# -- drift ----------------------------------------------------------------------

def drift_divergence(values: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Conservative first-order upwind approximation of ``div(U_k f)``.

    Face velocities use the exact interaction field at the face point; the
    outer faces carry no flux, so mass is conserved exactly.
    """
    k = values.ndim
    if k < 2:
        return np.zeros_like(values)
    n, h, v = grid.n, grid.h, grid.centers
    out = np.zeros_like(values)
    centers = np.meshgrid(*([v] * k), indexing="ij")
    total = sum(centers)
    for ax in range(k):
        # face between cell j and j+1 along ax: v_ax = v_j + h/2
        sl_lo = [slice(None)] * k
        sl_hi = [slice(None)] * k
        sl_lo[ax] = slice(0, n - 1)
        sl_hi[ax] = slice(1, n)
        sl_lo, sl_hi = tuple(sl_lo), tuple(sl_hi)
        v_face = centers[ax][sl_lo] + 0.5 * h
        u = (total[sl_lo] - centers[ax][sl_lo] + v_face) / k - v_face
        flux = np.where(u > 0, u * values[sl_lo], u * values[sl_hi])
        out[sl_lo] += flux / h
        out[sl_hi] -= flux / h
    return out


# -- first-order model ----------------------------------------------------------

def rhs_first_order(state: KineticState, rates: RateTable, n_sigma: int = N_SIGMA,
                    n_rho: int = N_RHO) -> tuple[np.ndarray, np.ndarray]:
    """Right sides ``(df1, df2)`` of the first-order two-equation model.

    ``df2`` is the pair equation divided by ``eps`` (its natural fast scale).
    The triple density is eliminated through its quasi-stationary form
    ``f3 = lam12 int S_3(rho) (f1 (.) f2) drho``.
    """
    eps = rates.epsilon
    if not eps > 0:
        raise DomainError("the first-order model needs eps > 0; use the limit model")
    if state.f2 is None:
        raise ConfigurationError("the first-order model needs a pair density")
    grid = state.grid
    h = grid.h
    m1 = masses(state.f1)
    m2 = masses(state.f2)
    M1, M2 = m1.sum(), m2.sum()
    df1_m = rates.m11 * m2.sum(axis=1) - rates.l11 * M1 * m1
    df2_m = (0.5 * rates.l11 * np.outer(m1, m1) - 0.5 * rates.m11 * m2
             - eps * rates.l12 * M1 * m2)
    if rates.l12 > 0:
        t3, _ = three_body_masses(m1, m2, triple_rule(rates, n_rho))
        # mu12 * (triple marginal) = lam12 * t3
        df1_m += eps * rates.l12 * (t3.sum(axis=1) - M2 * m1)
        df2_m += eps * rates.l12 * t3
    df1 = df1_m / h
    df2 = (df2_m / h ** 2 - drift_divergence(state.f2.values, grid)) / eps
    return df1, symmetrize(df2)


def rhs_reference(state: KineticState, rates: RateTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right sides of the truncated three-species system with dynamic ``f3``.

    ``df2`` and ``df3`` are divided by ``eps``.
    """
    eps = rates.epsilon
    if not eps > 0:
        raise DomainError("the reference model needs eps > 0")
    if state.f2 is None or state.f3 is None:
        raise ConfigurationError("the reference model needs pair and triple densities")
    grid = state.grid
    h = grid.h
    f1, f2, f3 = state.f1.values, state.f2.values, state.f3.values
    M1 = f1.sum() * h
    M2 = f2.sum() * h ** 2
    f3_v3 = f3.sum(axis=2) * h
    f3_v23 = f3_v3.sum(axis=1) * h
    df1 = (rates.m11 * f2.sum(axis=1) * h + eps * rates.m12 * f3_v23
           - rates.l11 * M1 * f1 - eps * rates.l12 * M2 * f1)
    df2 = (0.5 * rates.l11 * np.outer(f1, f1) - eps * rates.l12 * M1 * f2
           + eps * rates.m12 * f3_v3 - 0.5 * rates.m11 * f2
           - drift_divergence(f2, grid)) / eps
    f1f2 = (f1[:, None, None] * f2[None, :, :] + f1[None, :, None] * f2[:, None, :]
            + f1[None, None, :] * f2[:, :, None]) / 3.0
    df3 = (rates.l12 * f1f2 - rates.m12 * f3 - drift_divergence(f3, grid)) / eps
    return df1, symmetrize(df2), symmetrize(df3)


# -- scalar delayed model -------------------------------------------------------

def _delay_weights(hist: HistoryBuffer, rates: RateTable, t: float, head, n_sigma: int):
    """Pair rule truncated at ``t/eps`` and the loss factors at its nodes."""
    eps = rates.epsilon
    rule = pair_rule(rates, n_sigma, sigma_cut=t / eps)
    taus = np.clip(t - eps * rule.sigma, hist.t_first, t)
    if rates.l12 > 0:
        c_t = hist.cumulative_head(head)
        loss = np.exp(-rates.l12 * (c_t - hist.cumulative(taus, head)))
    else:
        loss = np.ones_like(taus)
    return rule, taus, loss


def delayed_pair_masses(hist: HistoryBuffer, rates: RateTable, t: float, head=None,
                        dim: int = 2, n_sigma: int = N_SIGMA) -> tuple[np.ndarray, float]:
    """Masses of the delayed binary-collision part of ``f2``.

    ``(lam11/2) int_0^{t/eps} exp(-lam12 int_{t-eps s}^t M1) S_20(s)
    (f1 x f1)(t - eps s) ds``, with ``f1`` history (cell masses) read from
    ``hist``; ``head = (t, m1, M1)`` supplies a state newer than the buffer.
    """
    n = hist.values[0].shape[0]
    if t <= 0:
        return np.zeros((n,) * dim), 0.0
    rule, taus, loss = _delay_weights(hist, rates, t, head, n_sigma)
    A = hist.sample(taus, head)
    return _push_products(A, rates.l11 / rates.m11 * rule.weights * loss, _pair_p(rule), dim)


def delayed_triple_channel(t3_hist: HistoryBuffer, hist: HistoryBuffer, rates: RateTable,
                           t: float, head=None, t3_head=None, dim: int = 2,
                           n_sigma: int = N_SIGMA) -> tuple[np.ndarray, float]:
    """Pair masses fed by ternary fragmentation, from a history of triple marginals.

    ``eps mu12 int_0^{t/eps} S_2eps f3_v3(t - eps s) ds`` with ``mu12 f3_v3 =
    lam12 t3``; ``t3_hist`` stores :func:`three_body_masses` outputs.
    """
    n = hist.values[0].shape[0]
    if t <= 0 or rates.l12 == 0:
        return np.zeros((n,) * dim), 0.0
    rule, taus, loss = _delay_weights(hist, rates, t, head, n_sigma)
    G = t3_hist.sample(taus, t3_head)
    coef = 2.0 * rates.epsilon * rates.l12 / rates.m11
    return _push_pairs(G, coef * rule.weights * loss, _pair_p(rule), dim)


def q2_delayed(hist: HistoryBuffer, rates: RateTable, t: float, eps: float | None = None,
               head=None, n_sigma: int = N_SIGMA) -> np.ndarray:
    """Delayed binary operator (cell values) at time ``t``.

    ``hist`` holds ``f1`` cell masses and must carry its grid; the current
    ``f1`` is the newest snapshot, or ``head = (t, m1, M1)`` if given.
    """
    if eps is not None and eps != rates.epsilon:
        rates = rates.with_epsilon(eps)
    m1_now = head[1] if head is not None else hist.values[-1]
    gain, _ = delayed_pair_masses(hist, rates, t, head, dim=1, n_sigma=n_sigma)
    return (rates.m11 * gain - rates.l11 * m1_now.sum() * m1_now) / _history_grid(hist).h


def _history_grid(hist: HistoryBuffer) -> VelocityGrid:
    if hist.grid is None:
        raise ConfigurationError("history buffer does not carry a grid")
    return hist.grid


def _ternary_parts(m1: np.ndarray, rates: RateTable, n_sigma: int, n_rho: int):
    """Pair rule, ``f2^0`` masses and the triple marginal built on them."""
    prule = pair_rule(rates, n_sigma)
    m20, _ = f2_limit_masses(m1, rates, prule)
    t3, _ = three_body_masses(m1, m20, triple_rule(rates, n_rho))
    return prule, m20, t3


def _f22_masses(t3: np.ndarray, rates: RateTable, n_nodes: int, dim: int):
    """``mu11`` times the masses of ``f2,2``: ``2 lam12 int b(s) Push_s(t3) ds``.

    The ternary channels are O(eps) terms, so they use the short rule of the
    triple integral.
    """
    rule = pair_rule(rates, n_nodes)
    G = np.broadcast_to(t3, (rule.n_sigma,) + t3.shape)
    return _push_pairs(G, 2.0 * rates.l12 * rule.weights, _pair_p(rule), dim)


def q3_ternary(f1: Density, rates: RateTable, n_sigma: int = N_SIGMA, n_rho: int = N_RHO) -> np.ndarray:
    """Instantaneous ternary operator (cell values).

    Gain is the direct triple channel ``lam12 mu12 int S_3 (f1 (.) f2^0)``
    marginalised to ``v1`` plus ``mu11`` times the ``v1``-marginal of
    ``f2,2``, where ``S_20`` acts on the ``v3``-marginal of the triple
    integral.  Loss is ``lam12 M2^0 f1``.
    """
    m1 = masses(f1)
    if rates.l12 == 0:
        return np.zeros_like(m1)
    _, m20, t3 = _ternary_parts(m1, rates, n_sigma, n_rho)
    f22_gain, _ = _f22_masses(t3, rates, n_rho, dim=1)
    gain = rates.l12 * t3.sum(axis=1) + f22_gain
    return (gain - rates.l12 * m20.sum() * m1) / f1.grid.h


def rhs_scalar(hist: HistoryBuffer, rates: RateTable, t: float, head=None,
               n_sigma: int = N_SIGMA, n_rho: int = N_RHO) -> np.ndarray:
    """``Q2 + eps Q3`` at time ``t`` (cell values)."""
    q2 = q2_delayed(hist, rates, t, head=head, n_sigma=n_sigma)
    if rates.l12 == 0:
        return q2
    grid = _history_grid(hist)
    m1_now = head[1] if head is not None else hist.values[-1]
    f1 = from_masses(grid, m1_now)
    return q2 + rates.epsilon * q3_ternary(f1, rates, n_sigma, n_rho)


def f2_as(hist: HistoryBuffer, f1: Density, rates: RateTable, t: float, eps: float | None = None,
          head=None, n_sigma: int = N_SIGMA, n_rho: int = N_RHO) -> Density:
    """Explicit pair reconstruction ``f2,1 + eps f2,2`` from the ``f1`` history."""
    if eps is not None and eps != rates.epsilon:
        rates = rates.with_epsilon(eps)
    m21, _ = delayed_pair_masses(hist, rates, t, head, dim=2, n_sigma=n_sigma)
    if rates.l12 > 0:
        _, _, t3 = _ternary_parts(masses(f1), rates, n_sigma, n_rho)
        m22, _ = _f22_masses(t3, rates, n_rho, dim=2)
        m21 = m21 + rates.epsilon * m22 / rates.m11
    return from_masses(f1.grid, m21)


def correlated_mass(f2_1: Density, eps: float) -> float:
    """Mass ``2 eps M_{2,1}`` held inside ongoing binary collisions."""
    return 2.0 * eps * f2_1.mass()


def f1_derivative_bound(rates: RateTable, M1: float, M2: float) -> float:
    """Upper bound on the L1 norm of the one-particle time derivative."""
    return max(rates.m11 * M2, rates.l11 * M1 ** 2) + rates.epsilon * rates.l12 * M1 * M2
