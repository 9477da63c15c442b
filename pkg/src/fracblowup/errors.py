"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FracBlowupError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FracBlowupError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedRangeError(FracBlowupError, ValueError):
    """The requested parameters are outside the range an algorithm supports."""


class ShapeError(FracBlowupError, ValueError):
    """Sample arrays or grids do not match."""


class EllipticityError(FracBlowupError, ValueError):
    """Diffusion coefficients violate uniform ellipticity."""


class ConvergenceError(FracBlowupError, RuntimeError):
    """An iterative method did not converge."""


class DegeneracyError(FracBlowupError, RuntimeError):
    """A converged eigenvector is not sign-definite."""


class NumericalFailureError(FracBlowupError, RuntimeError):
    """Non-finite values appeared in an accepted state."""

    def __init__(self, message: str, last_valid_time: float | None = None) -> None:
        super().__init__(message)
        self.last_valid_time = last_valid_time


class ConfigError(FracBlowupError, ValueError):
    """A configuration file is malformed or inconsistent."""
