"""Differentiable finite elements with neural material laws."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CheckpointError,
    ConvergenceError,
    DivergenceError,
    InvalidArgumentError,
    InvalidObservationError,
    MeshOrientationError,
    MeshParseError,
    PointLocationError,
    SingularMatrixError,
    UnsupportedOperationError,
)
