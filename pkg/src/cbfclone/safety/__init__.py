from .barriers import (
    BarrierSpec,
    EllipseBarrier,
    FunctionBarrier,
    TrackBarrier,
    TrackGeometry,
    car_barriers,
    central_difference_gradient,
    feedback_linearized_care,
    lie_derivatives,
    pendulum_barrier,
)
from .levelsets import UscReport, state_grid, usc_containment_check
from .lipschitz import LipschitzEstimate, dense_grid_lipschitz, estimate_lipschitz
from .sampling import covering_radius, reference_boundary, sample_boundary

__all__ = [
    "BarrierSpec",
    "EllipseBarrier",
    "FunctionBarrier",
    "TrackBarrier",
    "TrackGeometry",
    "car_barriers",
    "central_difference_gradient",
    "covering_radius",
    "dense_grid_lipschitz",
    "estimate_lipschitz",
    "feedback_linearized_care",
    "lie_derivatives",
    "pendulum_barrier",
    "reference_boundary",
    "sample_boundary",
    "state_grid",
    "usc_containment_check",
    "LipschitzEstimate",
    "UscReport",
]
