"""Simulation and validation toolkit for alignment dynamics with collisions of finite duration."""

from .core import (
    Density,
    DurationWeight,
    RateTable,
    VelocityGrid,
    duration_density,
    interaction_field,
    phi_jacobian_det,
    phi_map,
    sym_tensor,
)
from .errors import AbsorbingState, AlignKinError, ConfigurationError, DomainError, NumericalError

__version__ = "0.1.0"

__all__ = [
    "AbsorbingState",
    "AlignKinError",
    "ConfigurationError",
    "Density",
    "DomainError",
    "DurationWeight",
    "NumericalError",
    "RateTable",
    "VelocityGrid",
    "duration_density",
    "interaction_field",
    "phi_jacobian_det",
    "phi_map",
    "sym_tensor",
]
