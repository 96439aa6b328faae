"""Parameters, grids, gridded densities and exact collision kinematics.

Groups of ``k`` individuals relax toward their mean opinion with unit rate,

    dv_i/dt = mean(v) - v_i,

so the flow over a (signed) duration ``sigma`` is the closed-form map
``v -> mean(v) + exp(-sigma) * (v - mean(v))``.  Negative ``sigma`` recovers
the pre-collisional state from the post-collisional one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "RateTable",
    "VelocityGrid",
    "Density",
    "DurationWeight",
    "interaction_field",
    "phi_map",
    "phi_jacobian_det",
    "duration_density",
    "sym_tensor",
]


@dataclass(frozen=True)
class RateTable:
    """Coagulation rates ``lam[i, j]`` and fragmentation rates ``mu[i, j]``.

    Both tables are indexed by group size starting at 1 (row/column 0 is
    unused and zero) and have shape ``(kmax + 1, kmax + 1)``.  ``mu[i, j]`` is
    the rate at which a group of size ``i + j`` splits into sizes ``i`` and
    ``j``.
    """

    lam: np.ndarray
    mu: np.ndarray
    epsilon: float = 1.0
    kmax: int = field(init=False)

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1] or lam.shape != mu.shape:
            raise ConfigurationError("rate tables must be square and of equal shape")
        if lam.shape[0] < 2:
            raise ConfigurationError("rate tables need at least one group size")
        if not (np.all(lam >= 0) and np.all(mu >= 0)):
            raise DomainError("rates must be nonnegative")
        if not (np.allclose(lam, lam.T, rtol=0, atol=0) and np.allclose(mu, mu.T, rtol=0, atol=0)):
            raise DomainError("rate tables must be symmetric")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        lam.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "kmax", lam.shape[0] - 1)
        # the four three-species rates are read in inner loops; keep them as floats
        k2 = lam.shape[0] > 2
        object.__setattr__(self, "_scalars", (float(lam[1, 1]), float(mu[1, 1]),
                                              float(lam[1, 2]) if k2 else 0.0,
                                              float(mu[1, 2]) if k2 else 0.0))

    @classmethod
    def constant(cls, lam: float, mu: float, kmax: int, epsilon: float = 1.0,
                 closed: bool = True) -> "RateTable":
        """Size-independent rates.

        With ``closed=True`` every reaction that would create a group larger
        than ``kmax`` is switched off, so the truncated system conserves mass.
        """
        if kmax < 1:
            raise ConfigurationError("kmax must be >= 1")
        size = np.arange(kmax + 1)
        allowed = (size[:, None] >= 1) & (size[None, :] >= 1)
        lam_t = np.where(allowed, float(lam), 0.0)
        mu_t = np.where(allowed, float(mu), 0.0)
        if closed:
            too_big = size[:, None] + size[None, :] > kmax
            lam_t[too_big] = 0.0
            mu_t[too_big] = 0.0
        return cls(lam_t, mu_t, epsilon)

    @classmethod
    def three_species(cls, l11: float, m11: float, l12: float = 0.0, m12: float = 0.0,
                      epsilon: float = 1.0) -> "RateTable":
        """Rates of the model truncated at triples (no reaction beyond size 3)."""
        lam = np.zeros((4, 4))
        mu = np.zeros((4, 4))
        lam[1, 1] = l11
        mu[1, 1] = m11
        lam[1, 2] = lam[2, 1] = l12
        mu[1, 2] = mu[2, 1] = m12
        return cls(lam, mu, epsilon)

    def with_epsilon(self, epsilon: float) -> "RateTable":
        return RateTable(self.lam, self.mu, epsilon)

    @property
    def l11(self) -> float:
        return self._scalars[0]

    @property
    def m11(self) -> float:
        return self._scalars[1]

    @property
    def l12(self) -> float:
        return self._scalars[2]

    @property
    def m12(self) -> float:
        return self._scalars[3]

    def to_dict(self) -> dict:
        return {"lam": self.lam.tolist(), "mu": self.mu.tolist(), "epsilon": self.epsilon}


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centred grid on ``[v_min, v_max]``."""

    v_min: float
    v_max: float
    n: int

    def __post_init__(self):
        if not self.v_min < self.v_max:
            raise ConfigurationError("v_min must be smaller than v_max")
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError("grid needs n >= 2 cells")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.v_max - self.v_min) / self.n

    @property
    def centers(self) -> np.ndarray:
        return self.v_min + (np.arange(self.n) + 0.5) * self.h

    @property
    def edges(self) -> np.ndarray:
        return self.v_min + np.arange(self.n + 1) * self.h

    @property
    def first_center(self) -> float:
        return self.v_min + 0.5 * self.h

    def to_dict(self) -> dict:
        return {"v_min": self.v_min, "v_max": self.v_max, "n": self.n}


@dataclass(frozen=True)
class Density:
    """Cell values of a ``k``-particle density on a tensor grid.

    Masses are ``h**k``-weighted sums.  Symmetry under index permutations is
    enforced by explicit symmetrisation (:meth:`symmetrized`) rather than
    assumed.
    """

    grid: VelocityGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim < 1 or values.ndim > 3:
            raise ConfigurationError("densities must have arity 1, 2 or 3")
        if any(s != self.grid.n for s in values.shape):
            raise ConfigurationError(
                f"array shape {values.shape} does not match grid with n={self.grid.n}")
        if np.any(values < 0):
            raise DomainError("density values must be nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        return self.values.ndim

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.h ** self.k)

    def first_moment(self) -> float:
        """Integral of ``v_1 f``."""
        v = self.grid.centers
        marg = self.values.reshape(self.grid.n, -1).sum(axis=1) * self.grid.h ** self.k
        return float(v @ marg)

    def symmetrized(self) -> "Density":
        return Density(self.grid, symmetrize(self.values))

    def is_symmetric(self, rtol: float = 0.0) -> bool:
        scale = max(float(np.max(self.values, initial=0.0)), 1e-300)
        return all(np.max(np.abs(self.values - self.values.transpose(p)), initial=0.0) <= rtol * scale
                   for p in permutations(range(self.k)))

    @classmethod
    def zeros(cls, grid: VelocityGrid, k: int) -> "Density":
        return cls(grid, np.zeros((grid.n,) * k))


def symmetrize(values: np.ndarray) -> np.ndarray:
    """Average of ``values`` over all axis permutations."""
    perms = list(permutations(range(values.ndim)))
    out = np.zeros_like(values, dtype=float)
    for p in perms:
        out += values.transpose(p)
    return out / len(perms)


@dataclass(frozen=True)
class DurationWeight:
    """Exponential law of the duration of a binary collision."""

    mu11: float

    def __post_init__(self):
        if not self.mu11 > 0:
            raise DomainError("mu11 must be positive")

    def __call__(self, sigma):
        return duration_density(self.mu11, sigma)

    @property
    def mean(self) -> float:
        return 2.0 / self.mu11


def interaction_field(v) -> np.ndarray:
    """Alignment field ``mean(v) - v_i`` of a group; zero for singletons.

    ``v`` may carry leading batch dimensions; the group is the last axis.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] == 1:
        return np.zeros_like(v)
    return v.mean(axis=-1, keepdims=True) - v


def phi_map(sigma, v) -> np.ndarray:
    """Alignment flow over duration ``sigma`` applied to the group(s) ``v``."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 2:
        raise DomainError("phi_map needs groups of size >= 2")
    if not np.all(np.isfinite(sigma)):
        raise DomainError("sigma must be finite")
    vbar = v.mean(axis=-1, keepdims=True)
    a = np.exp(-np.asarray(sigma, dtype=float))
    if a.ndim:
        a = a[..., None]
    return vbar + a * (v - vbar)


def phi_jacobian_det(k: int, sigma: float) -> float:
    """Jacobian determinant of ``phi_map`` for groups of size ``k``."""
    if k < 2:
        raise DomainError("phi_jacobian_det needs k >= 2")
    return math.exp(-(k - 1) * float(sigma))


def duration_density(mu11: float, sigma):
    """Density ``(mu11/2) exp(-sigma mu11/2)`` of the collision duration."""
    sigma_arr = np.asarray(sigma, dtype=float)
    if np.any(sigma_arr < 0):
        raise DomainError("collision duration must be nonnegative")
    out = 0.5 * mu11 * np.exp(-0.5 * mu11 * sigma_arr)
    return float(out) if np.ndim(sigma) == 0 else out


def sym_tensor(fj: Density, fk: Density) -> Density:
    """Symmetric tensor product of a ``j``- and an ``m``-particle density.

    Averages ``fj(v_c) fk(v_c')`` over all ``j``-subsets ``c`` of the
    ``j + m`` coordinates.
    """
    if fj.grid != fk.grid:
        raise ConfigurationError("sym_tensor needs densities on the same grid")
    j, m = fj.k, fk.k
    k = j + m
    if k > 3:
        raise ConfigurationError("sym_tensor is implemented for total arity <= 3")
    letters = "abc"
    out = np.zeros((fj.grid.n,) * k)
    subsets = list(combinations(range(k), j))
    for c in subsets:
        rest = [i for i in range(k) if i not in c]
        spec = (
            "".join(letters[i] for i in c) + ","
            + "".join(letters[i] for i in rest) + "->" + letters[:k]
        )
        out += np.einsum(spec, fj.values, fk.values)
    return Density(fj.grid, out / len(subsets))
