"""Time integration of the four kinetic models.

* ``reference`` (A): truncated three-species system, ``f1, f2, f3`` evolved
  with first-order upwind drift.
* ``first-order`` (B): ``f1`` evolved by Heun; ``f2`` evaluated at every
  stage from its mild (Duhamel) representation over the stored history of
  ``f1`` and of the ternary source, so pair densities are never transported
  step by step.
* ``limit`` (C): instantaneous binary alignment operator.
* ``scalar`` (D): delayed binary operator plus instantaneous ternary
  operator acting on ``f1`` alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Density, RateTable, VelocityGrid, symmetrize
from ..errors import ConfigurationError, DomainError, NumericalError
from ..moments import log_entropy
from ..series import RunSeries
from . import operators as op
from .history import HistoryBuffer

__all__ = [
    "SolverOptions",
    "step",
    "KineticSolver",
    "ReferenceSolver",
    "FirstOrderSolver",
    "LimitSolver",
    "ScalarSolver",
    "make_solver",
    "MODELS",
]


@dataclass
class SolverOptions:
    """Numerical parameters shared by the kinetic solvers.

    ``dt=None`` selects ``min(1e-3, dt_fast_factor * eps)``.  ``clip_tol``
    and ``leak_tol`` are relative to the initial total mass.
    """

    dt: float | None = None
    dt_fast_factor: float = 0.25
    n_sigma: int = op.N_SIGMA
    n_rho: int = op.N_RHO
    clip_tol: float = 1e-6
    leak_tol: float = 1e-6
    history_spacing: float | None = None

    def resolve_dt(self, eps: float, fast: bool) -> float:
        if self.dt is not None:
            if not self.dt > 0:
                raise ConfigurationError("dt must be positive")
            return float(self.dt)
        return min(1e-3, self.dt_fast_factor * eps) if fast else 1e-3


def _clip(values: np.ndarray) -> tuple[np.ndarray, float]:
    neg = values < 0
    if not neg.any():
        return values, 0.0
    clipped = float(-values[neg].sum())
    out = values.copy()
    out[neg] = 0.0
    return out, clipped


def step(state: op.KineticState, rhs, dt: float, clip_tol: float = math.inf) -> tuple[op.KineticState, float]:
    """One Heun step of ``d(fields)/dt = rhs(state)`` for the fields present.

    ``rhs(state)`` returns derivative arrays for ``(f1, f2, f3)`` (only the
    fields that are not ``None``).  Negative values are clipped to zero; the
    clipped mass is returned and must not exceed ``clip_tol``.
    """
    names = [n for n in ("f1", "f2", "f3") if getattr(state, n) is not None]
    grid = state.grid
    y0 = [getattr(state, n).values for n in names]
    k1 = rhs(state)
    if len(k1) != len(names):
        raise ConfigurationError("rhs returned the wrong number of fields")
    mid = op.KineticState(*_assemble(grid, names, [np.maximum(y + dt * k, 0.0) for y, k in zip(y0, k1)]),
                          t=state.t + dt)
    k2 = rhs(mid)
    clipped = 0.0
    out = []
    for y, a, b in zip(y0, k1, k2):
        new, c = _clip(y + 0.5 * dt * (a + b))
        if new.ndim >= 2:
            new = symmetrize(new)
        clipped += c * grid.h ** new.ndim
        out.append(new)
    if clipped > clip_tol:
        raise NumericalError(f"clipped mass {clipped:.3e} exceeds clip_tol {clip_tol:.3e} "
                             f"at t={state.t:.6g}; reduce dt")
    return op.KineticState(*_assemble(grid, names, out), t=state.t + dt), clipped


def _assemble(grid: VelocityGrid, names, arrays):
    fields = dict(zip(names, (Density(grid, a) for a in arrays)))
    return fields.get("f1"), fields.get("f2"), fields.get("f3")


def _moments_1d(grid: VelocityGrid, m: np.ndarray, v_inf: float) -> tuple[float, float, float]:
    v = grid.centers
    return float(m.sum()), float(v @ m), float(((v - v_inf) ** 2) @ m)


def _pair_moments(grid: VelocityGrid, m2: np.ndarray, v_inf: float) -> dict:
    v = grid.centers
    marg = m2.sum(axis=1)
    dv2 = (v[:, None] - v[None, :]) ** 2
    return {"M2": float(marg.sum()), "I2": float(v @ marg),
            "V2": float(((v - v_inf) ** 2) @ marg), "Vt2": float((dv2 * m2).sum())}


class KineticSolver:
    """Common driver: fixed-step time loop, diagnostics and snapshots."""

    model = "base"
    fast = True

    def __init__(self, grid: VelocityGrid, rates: RateTable, f1: Density, f2: Density | None = None,
                 options: SolverOptions | None = None):
        if f1.grid != grid or (f2 is not None and f2.grid != grid):
            raise ConfigurationError("initial densities must live on the solver grid")
        self.grid = grid
        self.rates = rates
        self.options = options or SolverOptions()
        self.dt = self.options.resolve_dt(rates.epsilon, self.fast)
        self.t = 0.0
        self.leaked = 0.0
        self.clipped = 0.0
        self._f2_init = f2.symmetrized() if f2 is not None else Density.zeros(grid, 2)

    # -- hooks --------------------------------------------------------------
    def advance(self) -> None:
        raise NotImplementedError

    def diagnostics(self) -> dict:
        raise NotImplementedError

    def fields(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    # -- shared -------------------------------------------------------------
    def total_mass0(self) -> float:
        return self._mass0

    def run(self, t_end: float, record_every: float | None = None,
            snapshot_times=()) -> RunSeries:
        """Advance to ``t_end``, recording diagnostics every ``record_every``."""
        if t_end < self.t:
            raise DomainError("t_end precedes the current time")
        run = RunSeries(meta={"model": self.model, "dt": self.dt, "epsilon": self.rates.epsilon})
        n_steps = int(round((t_end - self.t) / self.dt))
        every = 1 if record_every is None else max(1, int(round(record_every / self.dt)))
        snaps = sorted(snapshot_times)
        run.rows.append(self.diagnostics())
        for n in range(1, n_steps + 1):
            self.advance()
            if n % every == 0 or n == n_steps:
                run.rows.append(self.diagnostics())
            while snaps and self.t >= snaps[0] - 0.5 * self.dt:
                run.snapshots.append(self.snapshot())
                snaps.pop(0)
        return run

    def snapshot(self) -> dict:
        return {"model": self.model, "t": self.t, "grid": self.grid.to_dict(),
                "rates": self.rates.to_dict(), "epsilon": self.rates.epsilon,
                "fields": {k: v.copy() for k, v in self.fields().items()}}

    def _check_leak(self) -> None:
        if self.leaked > self.options.leak_tol * self._mass0:
            raise NumericalError(f"leaked mass {self.leaked:.3e} exceeds leak_tol at t={self.t:.6g}; "
                                 "widen the velocity grid")


# -- model C --------------------------------------------------------------------

class LimitSolver(KineticSolver):
    """Instantaneous-limit equation ``d f1/dt = Q(f1)``."""

    model = "limit"
    fast = False

    def __init__(self, grid, rates, f1, f2=None, options=None):
        super().__init__(grid, rates, f1, None, options)
        self.state = op.KineticState(f1)
        self._mass0 = f1.mass()
        self._v_inf = f1.first_moment() / max(self._mass0, 1e-300)

    def _rhs(self, s: op.KineticState):
        return (op.q_limit(s.f1, self.rates, self.options.n_sigma),)

    def advance(self) -> None:
        self.state, c = step(self.state, self._rhs, self.dt, self.options.clip_tol * self._mass0)
        self.clipped += c
        self.t = self.state.t

    def f1_masses(self) -> np.ndarray:
        return op.masses(self.state.f1)

    def fields(self):
        return {"f1": self.state.f1.values}

    def diagnostics(self) -> dict:
        M1, I1, V1 = _moments_1d(self.grid, self.f1_masses(), self._v_inf)
        return {"t": self.t, "M1": M1, "I1": I1, "V1": V1, "mass": M1, "momentum": I1,
                "variance": V1, "leaked": self.leaked, "clipped": self.clipped}


# -- model A --------------------------------------------------------------------

class ReferenceSolver(KineticSolver):
    """Truncated three-species system with dynamic triples (upwind drift)."""

    model = "reference"

    def __init__(self, grid, rates, f1, f2=None, options=None, f3: Density | None = None):
        super().__init__(grid, rates, f1, f2, options)
        eps = rates.epsilon
        if not eps > 0:
            raise DomainError("the reference model needs eps > 0")
        f3 = f3 if f3 is not None else Density.zeros(grid, 3)
        self.state = op.KineticState(f1, self._f2_init, f3.symmetrized())
        umax = 2.0 / 3.0 * (grid.v_max - grid.v_min)
        self.cfl = self.dt * umax / (eps * grid.h)
        if self.cfl > 1:
            raise NumericalError(f"CFL number {self.cfl:.3g} > 1: reduce dt below "
                                 f"{eps * grid.h / umax:.3g}")
        self._mass0 = self._mass(self.state)
        self._v_inf = self._momentum(self.state) / max(self._mass0, 1e-300)

    def _mass(self, s):
        e = self.rates.epsilon
        return s.f1.mass() + 2 * e * s.f2.mass() + 3 * e * e * s.f3.mass()

    def _momentum(self, s):
        e = self.rates.epsilon
        return s.f1.first_moment() + 2 * e * s.f2.first_moment() + 3 * e * e * s.f3.first_moment()

    def _rhs(self, s):
        return op.rhs_reference(s, self.rates)

    def advance(self) -> None:
        self.state, c = step(self.state, self._rhs, self.dt, self.options.clip_tol * self._mass0)
        self.clipped += c
        self.t = self.state.t

    def f1_masses(self) -> np.ndarray:
        return op.masses(self.state.f1)

    def fields(self):
        return {"f1": self.state.f1.values, "f2": self.state.f2.values, "f3": self.state.f3.values}

    def diagnostics(self) -> dict:
        e = self.rates.epsilon
        s = self.state
        M1, I1, V1 = _moments_1d(self.grid, self.f1_masses(), self._v_inf)
        pm = _pair_moments(self.grid, op.masses(s.f2), self._v_inf)
        m3 = op.masses(s.f3)
        M3 = float(m3.sum())
        _, I3, V3 = _moments_1d(self.grid, m3.sum(axis=(1, 2)), self._v_inf)
        return {"t": self.t, "M1": M1, "I1": I1, "V1": V1, **pm, "M3": M3, "I3": I3, "V3": V3,
                "mass": M1 + 2 * e * pm["M2"] + 3 * e * e * M3,
                "momentum": I1 + 2 * e * pm["I2"] + 3 * e * e * I3,
                "variance": V1 + 2 * e * pm["V2"] + 3 * e * e * V3,
                "leaked": self.leaked, "clipped": self.clipped}


# -- models B and D share the delayed pair machinery ---------------------------

class _DelayedSolver(KineticSolver):
    """History bookkeeping for models whose pair part is a delayed integral."""

    def __init__(self, grid, rates, f1, f2=None, options=None):
        super().__init__(grid, rates, f1, f2, options)
        eps = rates.epsilon
        if not eps > 0:
            raise DomainError(f"model '{self.model}' needs eps > 0; use the limit model")
        # oldest quadrature node of the pair rule, in fast time
        sigma_far = float(op.pair_rule(rates, self.options.n_sigma).sigma.max())
        self.span = eps * sigma_far * 1.01 + 2 * self.dt
        self.hist = HistoryBuffer(span=self.span, grid=grid)
        m1 = op.masses(f1)
        self.m1 = m1
        self.hist.append(0.0, m1, float(m1.sum()))

    def _head(self, t, m1):
        return (t, m1, float(m1.sum()))

    def f1_masses(self) -> np.ndarray:
        return self.m1

    def _heun(self, rhs) -> None:
        """Heun step for ``f1`` masses; ``rhs(t, m1, stage)`` returns mass rates."""
        dt = self.dt
        t0, m0 = self.t, self.m1
        k1 = rhs(t0, m0, None)
        m_star = np.maximum(m0 + dt * k1, 0.0)
        k2 = rhs(t0 + dt, m_star, self._head(t0 + dt, m_star))
        new, c = _clip(m0 + 0.5 * dt * (k1 + k2))
        if c > self.options.clip_tol * self._mass0:
            raise NumericalError(f"clipped mass {c:.3e} exceeds clip_tol at t={t0:.6g}; reduce dt")
        self.clipped += c
        self.t = t0 + dt
        self.m1 = new
        self.hist.append(self.t, new, float(new.sum()))

    def fields(self):
        return {"f1": self.m1 / self.grid.h}


class FirstOrderSolver(_DelayedSolver):
    """First-order two-equation model through its mild formulation.

    ``f2(t)`` is the sum of the decayed initial pair density, the delayed
    binary-collision integral over the ``f1`` history, and the delayed
    ternary-fragmentation integral over the history of the triple marginal.
    The pair masses and the triple marginal are computed once per step at
    the step start; the second Heun stage uses the linear extrapolation of
    the triple marginal.
    """

    model = "first-order"

    def __init__(self, grid, rates, f1, f2=None, options=None):
        super().__init__(grid, rates, f1, f2, options)
        eps = rates.epsilon
        self.m2_init = op.masses(self._f2_init)
        spacing = self.options.history_spacing
        if spacing is None:
            spacing = eps / 32
        self.t3_hist = HistoryBuffer(span=self.span, min_spacing=spacing, grid=grid)
        self._t3_last = None
        self._t3_prev = None
        self._f2_cache = None
        self._mass0 = float(self.m1.sum()) + 2 * eps * float(self.m2_init.sum())
        m0 = f1.first_moment() + 2 * eps * self._f2_init.first_moment()
        self._v_inf = m0 / max(self._mass0, 1e-300)
        self._prime()

    @property
    def ternary(self) -> bool:
        return self.rates.l12 > 0

    def _t3_extrapolated(self, t):
        if self._t3_prev is None:
            return self._t3_last[1]
        (t1, g1), (t0, g0) = self._t3_last, self._t3_prev
        th = (t - t1) / (t1 - t0)
        return np.maximum(g1 + th * (g1 - g0), 0.0)

    def pair_masses(self, t: float, head=None, dim: int = 2, t3_head=None) -> np.ndarray:
        """Cell masses of ``f2(t)`` (``dim=2``) or of its ``v1``-marginal."""
        delayed, rest = self._pair_parts(t, head, dim, t3_head)
        return delayed + rest

    def _pair_parts(self, t, head, dim, t3_head):
        """``(delayed binary integral, ternary channel + decayed initial data)``.

        The second part is deposited point by point, so its ``v1``-marginal
        equals the row sums of its two-dimensional version.
        """
        r = self.rates
        eps = r.epsilon
        m, leak = op.delayed_pair_masses(self.hist, r, t, head, dim, self.options.n_sigma)
        self.leaked += leak
        rest = np.zeros_like(m)
        if self.ternary and t > 0:
            if t3_head is not None and t3_head[0] <= self.t3_hist.t_last:
                t3_head = None
            g, leak = op.delayed_triple_channel(self.t3_hist, self.hist, r, t, head, t3_head,
                                                dim, self.options.n_rho)
            rest += g
            self.leaked += leak
        if self.m2_init.any():
            a = math.exp(-t / eps)
            c = self.hist.cumulative_head(head) if r.l12 > 0 else 0.0
            w = math.exp(-r.m11 * t / (2 * eps) - r.l12 * c)
            if w > 0:
                g, leak = op._push_pairs(self.m2_init[None], np.array([w]),
                                         np.array([0.5 * (1 + a)]), dim)
                rest += g
                self.leaked += leak
        return m, rest

    def _t3(self, m1, m2):
        t3, leak = op.three_body_masses(m1, m2, op.triple_rule(self.rates, self.options.n_rho))
        self.leaked += leak
        return t3

    def _prime(self) -> None:
        """Pair density and triple marginal at the current step start."""
        t = self.t
        t3_head = None
        if self.ternary and self._t3_last is not None:
            t3_head = (t, self._t3_extrapolated(t), 0.0)
        delayed, rest = self._pair_parts(t, None, 2, t3_head)
        m2 = delayed + rest
        self._f2_cache = (t, m2)
        self._rest_marginal = rest.sum(axis=1)
        if self.ternary:
            t3 = self._t3(self.m1, m2)
            self._t3_prev = self._t3_last
            self._t3_last = (t, t3)
            self.t3_hist.append(t, t3)

    def _rhs(self, t, m1, head):
        r = self.rates
        eps = r.epsilon
        if head is None:
            t3 = self._t3_last[1] if self.ternary else None
            # first stage: the point-deposited part is reused from the step start
            m, leak = op.delayed_pair_masses(self.hist, r, t, None, 1, self.options.n_sigma)
            self.leaked += leak
            marg = m + self._rest_marginal
        else:
            t3 = self._t3_extrapolated(t) if self.ternary else None
            marg = self.pair_masses(t, head, 1, (t, t3, 0.0) if self.ternary else None)
        M1 = m1.sum()
        d = r.m11 * marg - r.l11 * M1 * m1
        if self.ternary:
            d += eps * r.l12 * (t3.sum(axis=1) - marg.sum() * m1)
        return d

    def advance(self) -> None:
        self._heun(self._rhs)
        self._prime()
        self._check_leak()

    def f2_masses(self) -> np.ndarray:
        return self._f2_cache[1]

    def fields(self):
        return {"f1": self.m1 / self.grid.h, "f2": self.f2_masses() / self.grid.h ** 2}

    def diagnostics(self) -> dict:
        r = self.rates
        e = r.epsilon
        g = self.grid
        M1, I1, V1 = _moments_1d(g, self.m1, self._v_inf)
        m2 = self.f2_masses()
        pm = _pair_moments(g, m2, self._v_inf)
        M3 = r.l12 / r.m12 * M1 * pm["M2"] if self.ternary else 0.0
        f1 = Density(g, self.m1 / g.h)
        f2 = Density(g, m2 / g.h ** 2)
        return {"t": self.t, "M1": M1, "I1": I1, "V1": V1, **pm, "M3": M3,
                "mass": M1 + 2 * e * pm["M2"], "momentum": I1 + 2 * e * pm["I2"],
                "variance": V1 + 2 * e * pm["V2"], "entropy": log_entropy(f1, f2, r),
                "leaked": self.leaked, "clipped": self.clipped}


class ScalarSolver(_DelayedSolver):
    """Scalar delayed model ``d f1/dt = Q2 + eps Q3`` with its pair reconstructions."""

    model = "scalar"

    def __init__(self, grid, rates, f1, f2=None, options=None):
        super().__init__(grid, rates, f1, None, options)
        self._mass0 = float(self.m1.sum())
        self._v_inf = f1.first_moment() / max(self._mass0, 1e-300)

    def _rhs(self, t, m1, head):
        q = op.rhs_scalar(self.hist, self.rates, t, head, self.options.n_sigma, self.options.n_rho)
        return q * self.grid.h

    def advance(self) -> None:
        self._heun(self._rhs)
        self._check_leak()

    def f21_masses(self, dim: int = 2) -> np.ndarray:
        m, leak = op.delayed_pair_masses(self.hist, self.rates, self.t, None, dim, self.options.n_sigma)
        return m

    def f2_as(self) -> Density:
        f1 = Density(self.grid, self.m1 / self.grid.h)
        return op.f2_as(self.hist, f1, self.rates, self.t, n_sigma=self.options.n_sigma,
                        n_rho=self.options.n_rho)

    def fields(self):
        return {"f1": self.m1 / self.grid.h, "f2_as": self.f2_as().values}

    def diagnostics(self) -> dict:
        r = self.rates
        e = r.epsilon
        M1, I1, V1 = _moments_1d(self.grid, self.m1, self._v_inf)
        M21 = float(self.f21_masses(1).sum())
        M20 = r.l11 / r.m11 * M1 ** 2
        return {"t": self.t, "M1": M1, "I1": I1, "V1": V1, "M21": M21, "M20": M20,
                "correlated_mass": 2 * e * M21, "mass": M1 + 2 * e * M21,
                "mass_rate_identity": 2 * e * r.l12 * M1 * (M20 - M21),
                "leaked": self.leaked, "clipped": self.clipped}


MODELS = {
    "reference": ReferenceSolver,
    "first-order": FirstOrderSolver,
    "limit": LimitSolver,
    "scalar": ScalarSolver,
}


def make_solver(model: str, grid: VelocityGrid, rates: RateTable, f1: Density,
                f2: Density | None = None, options: SolverOptions | None = None) -> KineticSolver:
    try:
        cls = MODELS[model]
    except KeyError:
        raise ConfigurationError(f"unknown model '{model}' (choose from {sorted(MODELS)})") from None
    return cls(grid, rates, f1, f2, options)
