"""Numerical pseudohermitian geometry on CR model manifolds."""

from .core import (
    AdaptedFrame,
    ChartPoint,
    ModelManifold,
    Tangent,
    dtheta,
    levi_form,
    metric_duality_residual,
    omega,
    webster_metric,
)
from .models import heisenberg, model_from_id, scaled_heisenberg, sphere

__all__ = [
    "AdaptedFrame",
    "ChartPoint",
    "ModelManifold",
    "Tangent",
    "dtheta",
    "heisenberg",
    "levi_form",
    "metric_duality_residual",
    "model_from_id",
    "omega",
    "scaled_heisenberg",
    "sphere",
    "webster_metric",
]

__version__ = "0.1.0"
