"""Exception types shared across the package."""


class QkError(Exception):
    """Base class for all package errors."""


class DomainError(QkError, ValueError):
    """A curvature vector lies outside the set where a quotient is defined."""


class DimensionError(QkError, ValueError):
    """Input dimension is outside the supported range."""


class ShapeError(QkError, ValueError):
    """A matrix does not have the required structure."""


class EigensolverError(QkError, RuntimeError):
    pass


class SolveError(QkError, RuntimeError):
    """A scalar solve degenerated (vanishing leading coefficient)."""


class ConeViolation(QkError):
    """Grid points whose discrete curvatures left the admissible cone."""

    def __init__(self, points, message=None):
        self.points = [tuple(int(i) for i in p) for p in points]
        if message is None:
            head = self.points[:5]
            more = "" if len(self.points) <= 5 else f" (+{len(self.points) - 5} more)"
            message = f"{len(self.points)} grid point(s) outside the cone: {head}{more}"
        super().__init__(message)


class NonFinite(QkError, FloatingPointError):
    """The solution became non-finite."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"non-finite values at t={t!r}")


class NonConvergence(QkError, RuntimeError):
    pass


class ConfigError(QkError, ValueError):
    pass


class FitError(QkError, ValueError):
    pass


class InsufficientData(QkError, ValueError):
    pass
