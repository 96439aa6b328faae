"""Distances between runs and empirical convergence orders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ..errors import ConfigurationError, DomainError, NumericalError
from ..series import RunSeries

__all__ = ["Comparison", "compare_l1", "l1_distance", "bounded_lipschitz", "convergence_order",
           "resample_snapshots"]

BL_MAX_CELLS = 64


@dataclass
class Comparison:
    """Result of :func:`compare_l1`.

    ``table`` has one row per compared time with the f1 L1 distance and,
    when both runs carry an ``f2`` field, the bounded-Lipschitz and L1
    distances of the pair densities.
    """

    sup_l1: float
    table: list[dict]
    sup_bl_f2: float | None = None

    def __iter__(self):
        yield self.sup_l1
        yield self.table


def _grid_key(snap: dict):
    g = snap["grid"]
    return (float(g["v_min"]), float(g["v_max"]), int(g["n"]))


def _h(snap: dict) -> float:
    lo, hi, n = _grid_key(snap)
    return (hi - lo) / n


def resample_snapshots(snaps: list[dict], times) -> list[dict]:
    """Linear interpolation in ``t`` of snapshot fields at ``times``."""
    if not snaps:
        raise ConfigurationError("run has no snapshots to compare")
    ts = np.array([s["t"] for s in snaps])
    out = []
    for t in np.atleast_1d(times):
        k = int(np.searchsorted(ts, t))
        tol = 1e-9 * max(1.0, abs(t))
        if k < len(ts) and abs(ts[k] - t) <= tol:
            out.append(snaps[k])
            continue
        if k > 0 and abs(ts[k - 1] - t) <= tol:
            out.append(snaps[k - 1])
            continue
        if k == 0 or k == len(ts):
            raise ConfigurationError(f"t={t:.6g} lies outside the snapshot range "
                                     f"[{ts[0]:.6g}, {ts[-1]:.6g}]")
        th = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
        a, b = snaps[k - 1], snaps[k]
        fields = {name: (1 - th) * a["fields"][name] + th * b["fields"][name]
                  for name in a["fields"] if name in b["fields"]}
        out.append({**a, "t": float(t), "fields": fields})
    return out


def l1_distance(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """Grid L1 norm of ``a - b`` (cell volume ``h**ndim``)."""
    if a.shape != b.shape:
        raise ConfigurationError(f"incompatible grids: shapes {a.shape} and {b.shape}")
    return float(np.abs(a - b).sum()) * h ** a.ndim


def _coarsen(m: np.ndarray, factor: int) -> np.ndarray:
    n = m.shape[0]
    pad = (-n) % factor
    if pad:
        m = np.pad(m, [(0, pad)] * m.ndim)
    shape = []
    for s in m.shape:
        shape += [s // factor, factor]
    axes = tuple(range(1, 2 * m.ndim, 2))
    return m.reshape(shape).sum(axis=axes)


def bounded_lipschitz(a: np.ndarray, b: np.ndarray, h: float, max_cells: int = BL_MAX_CELLS) -> float:
    """Bounded-Lipschitz (Fortet-Mourier) distance of two gridded densities.

    ``sup { sum g (a - b) h^d : |g| <= 1, |g(x) - g(y)| <= |x - y|_1 }``, with
    the Lipschitz condition imposed between grid neighbours (which is
    equivalent on the lattice).  Grids finer than ``max_cells`` per axis are
    coarsened by summing cell masses into blocks first.
    """
    if a.shape != b.shape:
        raise ConfigurationError(f"incompatible grids: shapes {a.shape} and {b.shape}")
    d = (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) * h ** a.ndim
    factor = max(1, -(-d.shape[0] // max_cells))
    d = _coarsen(d, factor)
    step = h * factor
    shape = d.shape
    n_var = d.size
    idx = np.arange(n_var).reshape(shape)
    rows, cols, vals = [], [], []
    r = 0
    for axis in range(d.ndim):
        lo = np.take(idx, np.arange(shape[axis] - 1), axis=axis).ravel()
        hi = np.take(idx, np.arange(1, shape[axis]), axis=axis).ravel()
        m = len(lo)
        # g_hi - g_lo <= step and g_lo - g_hi <= step
        for sgn in (1.0, -1.0):
            rr = np.arange(r, r + m)
            rows += [rr, rr]
            cols += [hi, lo]
            vals += [np.full(m, sgn), np.full(m, -sgn)]
            r += m
    if r:
        A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(r, n_var))
        b_ub = np.full(r, step)
    else:
        A, b_ub = None, None
    res = linprog(-d.ravel(), A_ub=A, b_ub=b_ub, bounds=(-1.0, 1.0), method="highs")
    if res.status != 0:
        raise NumericalError(f"bounded-Lipschitz LP failed: {res.message}")
    return float(-res.fun)


def compare_l1(a: RunSeries, b: RunSeries, t_window: tuple[float, float] | None = None,
               field: str = "f1", pair_field: str = "f2") -> Comparison:
    """Supremum over ``t_window`` of the L1 distance of ``field`` snapshots.

    Times are taken from ``a``; ``b`` is linearly interpolated in time where
    its snapshot times differ.  When both runs carry ``pair_field`` the
    bounded-Lipschitz distance of those is reported too.
    """
    if not a.snapshots or not b.snapshots:
        raise ConfigurationError("both runs need snapshots")
    if _grid_key(a.snapshots[0]) != _grid_key(b.snapshots[0]):
        raise ConfigurationError(f"incompatible grids: {_grid_key(a.snapshots[0])} "
                                 f"vs {_grid_key(b.snapshots[0])}")
    h = _h(a.snapshots[0])
    sa = a.snapshots
    if t_window is not None:
        lo, hi = t_window
        tol = 1e-9 * max(1.0, abs(hi))
        sa = [s for s in sa if lo - tol <= s["t"] <= hi + tol]
    if not sa:
        raise ConfigurationError(f"no snapshots of the first run fall in the window {t_window}")
    sb = resample_snapshots(b.snapshots, [s["t"] for s in sa])
    table = []
    for x, y in zip(sa, sb):
        row = {"t": float(x["t"]), "l1": l1_distance(x["fields"][field], y["fields"][field], h)}
        if pair_field in x["fields"] and pair_field in y["fields"]:
            fa, fb = x["fields"][pair_field], y["fields"][pair_field]
            row["bl_f2"] = bounded_lipschitz(fa, fb, h)
            row["l1_f2"] = l1_distance(fa, fb, h)
        table.append(row)
    sup_bl = max(r["bl_f2"] for r in table) if "bl_f2" in table[0] else None
    return Comparison(max(r["l1"] for r in table), table, sup_bl)


def convergence_order(errors) -> tuple[float, float]:
    """Least-squares slope of ``log err`` against ``log eps`` and its r².

    ``errors`` is a sequence of ``(eps, err)``; it is sorted by decreasing
    ``eps`` first so the result does not depend on the order of evaluation.
    """
    pts = sorted(((float(e), float(r)) for e, r in errors), key=lambda p: -p[0])
    if len(pts) < 3:
        raise DomainError("convergence_order needs at least 3 points")
    eps = np.array([p[0] for p in pts])
    err = np.array([p[1] for p in pts])
    if np.any(err <= 0) or not np.all(np.isfinite(err)):
        raise DomainError("errors must be positive and finite")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise DomainError("eps values must be positive and distinct")
    x, y = np.log(eps), np.log(err)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return float(slope), float(r2)
