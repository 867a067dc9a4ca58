"""Numerical laboratory for curve shortening flow and its monotonicity formulas."""

from .geometry import (
    ClosedCurve,
    CurveGeometry,
    DegenerateCurveError,
    GeometryError,
    OriginCrossingError,
    derivatives,
    enclosed_area,
    is_star_shaped,
    make_circle,
    make_ellipse,
    make_polar,
    resample_uniform_arclength,
    total_length,
)
from .flow import (
    ISOTROPIC,
    Anisotropy,
    FlowConfig,
    Trajectory,
    estimate_blowup_time,
    physical_rhs,
    rescaled_initial,
    rescaled_rhs,
    run,
    step,
    to_rescaled,
)

__version__ = "0.1.0"
