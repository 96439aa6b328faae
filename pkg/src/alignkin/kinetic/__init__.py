"""Deterministic grid solvers for the kinetic model hierarchy."""

from .history import HistoryBuffer
from .operators import (
    KineticState,
    correlated_mass,
    f1_derivative_bound,
    f2_as,
    f2_limit,
    f2_zero,
    q2_delayed,
    q3_ternary,
    q_limit,
    rhs_first_order,
    rhs_reference,
    rhs_scalar,
    three_body_masses,
)
from .quadrature import SemigroupQuadrature, duration_rule
from .semigroups import apply_s2eps, apply_s3, apply_s20, pullback

__all__ = [
    "HistoryBuffer",
    "KineticState",
    "SemigroupQuadrature",
    "apply_s20",
    "apply_s2eps",
    "apply_s3",
    "correlated_mass",
    "duration_rule",
    "f1_derivative_bound",
    "f2_as",
    "f2_limit",
    "f2_zero",
    "pullback",
    "q2_delayed",
    "q3_ternary",
    "q_limit",
    "rhs_first_order",
    "rhs_reference",
    "rhs_scalar",
    "three_body_masses",
]
