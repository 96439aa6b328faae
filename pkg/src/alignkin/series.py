"""Time-stamped observable records shared by all simulators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RunSeries"]


@dataclass
class RunSeries:
    """Rows of ``(t, observables...)`` plus metadata and optional snapshots.

    Every row of one series has the same keys.  ``snapshots`` holds dicts
    with ``t`` and a ``fields`` mapping of grid arrays.
    """

    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    snapshots: list[dict] = field(default_factory=list)
    histograms: list[np.ndarray] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def columns(self) -> list[str]:
        return list(self.rows[0]) if self.rows else []

    @property
    def t(self) -> np.ndarray:
        return self.column("t")
