"""Exception types shared across the package."""

from __future__ import annotations


class InvalidArgumentError(ValueError):
    pass


class MeshParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshOrientationError(RuntimeError):
    def __init__(self, cell: int):
        super().__init__(f"cell {cell} has non-positive signed area")
        self.cell = cell


class PointLocationError(ValueError):
    pass


class UnsupportedOperationError(TypeError):
    pass


class SingularMatrixError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve stops before reaching tolerance.

    ``iterate`` carries the last iterate so callers can inspect or restart.
    """

    def __init__(self, message: str, iterate=None, report=None):
        super().__init__(message)
        self.iterate = iterate
        self.report = report


class InvalidObservationError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Training aborted; ``model`` and ``history`` hold the last accepted state."""

    def __init__(self, message: str, model=None, history=None):
        super().__init__(message)
        self.model = model
        self.history = history or []
