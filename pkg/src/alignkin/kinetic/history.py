"""Time-ordered snapshots with linear interpolation in time."""

from __future__ import annotations

import bisect

import numpy as np

from ..errors import ConfigurationError

__all__ = ["HistoryBuffer"]


class HistoryBuffer:
    """Snapshots ``(t, values, M1)`` plus the running integral of ``M1``.

    ``span`` (if given) bounds how far back snapshots are kept; one snapshot
    older than ``t_last - span`` is retained so interpolation at the window
    edge stays possible.  ``min_spacing`` thins storage when steps are much
    shorter than the time scale of the stored field.  ``grid`` optionally
    records the velocity grid the stored arrays live on.
    """

    def __init__(self, span: float | None = None, min_spacing: float = 0.0, grid=None):
        self.grid = grid
        self.span = span
        self.min_spacing = min_spacing
        self.times: list[float] = []
        self.values: list[np.ndarray] = []
        self.m1: list[float] = []
        self.cum: list[float] = []
        # total integral of M1 up to the newest step (also tracked when thinned)
        self._t_last = None
        self._m1_last = None
        self._cum_last = 0.0

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t_first(self) -> float:
        return self.times[0]

    @property
    def t_last(self) -> float:
        return self._t_last

    def append(self, t: float, values: np.ndarray, m1: float = 0.0) -> None:
        if self._t_last is not None:
            if t <= self._t_last:
                raise ConfigurationError("history snapshots must be strictly time-ordered")
            self._cum_last += 0.5 * (t - self._t_last) * (self._m1_last + m1)
        self._t_last = t
        self._m1_last = m1
        if len(self.times) >= 2 and t - self.times[-2] < self.min_spacing:
            # the newest snapshot floats until it is min_spacing past its predecessor
            self.times[-1] = t
            self.values[-1] = np.array(values, dtype=float)
            self.m1[-1] = m1
            self.cum[-1] = self._cum_last
        else:
            self.times.append(t)
            self.values.append(np.array(values, dtype=float))
            self.m1.append(m1)
            self.cum.append(self._cum_last)
        self._trim()

    def _trim(self) -> None:
        if self.span is None or len(self.times) < 3:
            return
        cutoff = self.times[-1] - self.span
        k = bisect.bisect_right(self.times, cutoff) - 1
        if k > 0:
            del self.times[:k], self.values[:k], self.m1[:k], self.cum[:k]

    def _locate(self, taus, head):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        times = self.times
        if head is not None:
            t_head = head[0]
            if t_head < times[-1]:
                raise ConfigurationError("head time precedes the newest snapshot")
        hi_t = head[0] if head is not None else times[-1]
        tol = 1e-12 * max(1.0, abs(hi_t))
        if np.any(taus < times[0] - tol) or np.any(taus > hi_t + tol):
            raise ConfigurationError(
                f"history covers [{times[0]:.6g}, {hi_t:.6g}] but "
                f"[{taus.min():.6g}, {taus.max():.6g}] was requested")
        return taus

    def sample(self, taus, head=None) -> np.ndarray:
        """Interpolated values at ``taus``; ``head = (t, values, m1)`` extends the buffer."""
        taus = self._locate(taus, head)
        times = self.times
        out = np.empty((len(taus),) + self.values[0].shape)
        for q, tau in enumerate(taus):
            if head is not None and tau > times[-1]:
                t0, t1 = times[-1], head[0]
                v0, v1 = self.values[-1], head[1]
            else:
                k = min(max(bisect.bisect_right(times, tau) - 1, 0), len(times) - 1)
                if k == len(times) - 1:
                    out[q] = self.values[k]
                    continue
                t0, t1 = times[k], times[k + 1]
                v0, v1 = self.values[k], self.values[k + 1]
            th = 0.0 if t1 == t0 else (tau - t0) / (t1 - t0)
            th = min(max(th, 0.0), 1.0)
            out[q] = (1 - th) * v0 + th * v1
        return out

    def cumulative(self, taus, head=None) -> np.ndarray:
        """Integral of ``M1`` from the first append up to each ``tau``."""
        taus = self._locate(taus, head)
        times = self.times
        tt = list(times)
        cc = list(self.cum)
        if head is not None and head[0] > tt[-1]:
            cc.append(cc[-1] + 0.5 * (head[0] - tt[-1]) * (self._m1_last + head[2]))
            tt.append(head[0])
        return np.interp(taus, tt, cc)

    def cumulative_head(self, head=None) -> float:
        if head is None:
            return self._cum_last
        return self._cum_last + 0.5 * (head[0] - self._t_last) * (self._m1_last + head[2])
