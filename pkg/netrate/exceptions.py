"""
Error hierarchy for netrate.

Validation problems subclass ValueError, numerical failures subclass
RuntimeError; the CLI maps them to exit codes 1 and 2 respectively.
"""

from typing import Optional, Sequence


class NetRateError(Exception):
    """Base class for all netrate errors."""


class DomainError(NetRateError, ValueError):
    """An input lies outside the domain of an operation."""


class ConfigError(NetRateError, ValueError):
    """An experiment configuration could not be loaded or validated."""


class PlotError(NetRateError, ValueError):
    """A CSV handed to the plotter is malformed or empty."""


class NumericalError(NetRateError, RuntimeError):
    """A numerical procedure failed to deliver a trustworthy result."""


class ConvergenceError(NumericalError):
    """Fixed-point iteration did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BoundsError(NumericalError):
    """A converged fixed point violates its provable bounds."""


class SamplingError(NumericalError):
    """Too many Monte Carlo samples had to be rejected."""

    def __init__(self, message: str, rejected: int, total: int):
        super().__init__(message)
        self.rejected = rejected
        self.total = total


class ConcavityError(NumericalError):
    """The net-rate derivative is not decreasing, so bisection is unsafe."""

    def __init__(
        self,
        message: str,
        taus: Optional[Sequence[float]] = None,
        values: Optional[Sequence[float]] = None,
    ):
        super().__init__(message)
        self.taus = list(taus) if taus is not None else []
        self.values = list(values) if values is not None else []


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to the CLI exit code.

    Args:
        error: Exception raised while running a command

    Returns:
        2 for numerical failures, 1 for everything else
    """
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_VALIDATION
