"""Exception types raised across the package."""


class QuadSmoothError(Exception):
    """Base class for all package errors."""


class NonFiniteValue(QuadSmoothError, ValueError):
    """A NaN or Inf showed up where a finite number was required."""


class SingularSystem(QuadSmoothError):
    """The interpolation matrix is numerically singular."""


class EmptyDomain(QuadSmoothError):
    """The margin-shrunk domain contains no points."""


class NonPositiveJacobian(QuadSmoothError):
    """A sampled Jacobian determinant was not positive."""

    def __init__(self, message, witness=None, value=None):
        super().__init__(message)
        self.witness = witness
        self.value = value


class DegenerateConstants(QuadSmoothError):
    """The (d, L, M) constants cannot drive a smoothing step."""


class ConstraintUnsatisfiable(QuadSmoothError):
    """No admissible parameter exists for the requested constraints."""


class EdgeMismatch(QuadSmoothError):
    """Two quadratics that should agree on a shared edge do not."""


class OutOfChart(QuadSmoothError, ValueError):
    """A query point lies outside the chart where an evaluator is defined."""


class BoundViolation(QuadSmoothError):
    """A verified bound failed; carries the offending sample."""

    def __init__(self, message, witness=None, value=None, bound=None):
        super().__init__(message)
        self.witness = witness
        self.value = value
        self.bound = bound


class BadMeasureExceeded(QuadSmoothError):
    """The total area of bad squares is not below the requested target."""

    def __init__(self, measured, target):
        super().__init__(f"bad measure {measured:.6g} is not below target {target:.6g}")
        self.measured = measured
        self.target = target
