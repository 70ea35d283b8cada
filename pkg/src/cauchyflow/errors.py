"""Exception hierarchy shared by every cauchyflow module."""

from __future__ import annotations


class CauchyFlowError(Exception):
    """Base class for all library errors."""


class NonFiniteFieldError(CauchyFlowError, ValueError):
    pass


class DimensionMismatchError(CauchyFlowError, ValueError):
    pass


class GridMismatchError(CauchyFlowError, ValueError):
    pass


class InconsistentSourceError(CauchyFlowError, ValueError):
    """The curl source handed to an inversion is not divergence free."""


class MapDegenerateError(CauchyFlowError, ValueError):
    """The Jacobian determinant of a Lagrangian map is non-positive somewhere."""

    def __init__(self, message: str, worst_index: tuple[int, ...], worst_det: float):
        super().__init__(message)
        self.worst_index = worst_index
        self.worst_det = worst_det


class ConstraintViolatedError(CauchyFlowError, ValueError):
    """The unit-determinant constraint does not hold within tolerance."""

    def __init__(self, message: str, max_deviation: float):
        super().__init__(message)
        self.max_deviation = max_deviation


class MissingPressureHistoryError(CauchyFlowError, ValueError):
    pass


class NonUniformSpacingError(CauchyFlowError, ValueError):
    pass


class ExtrapolationError(CauchyFlowError, ValueError):
    """Series evaluation requested outside its trust region."""


class TrackingError(CauchyFlowError, RuntimeError):
    """Adaptive trajectory integration could not meet its tolerance."""


class OrientationError(CauchyFlowError, ValueError):
    pass


class ContourError(CauchyFlowError, ValueError):
    pass


class LabelMismatchError(CauchyFlowError, ValueError):
    pass
