"""Exception types raised across the package."""


class IccCtaError(Exception):
    """Base class for package errors."""


class ParityError(IccCtaError, ValueError):
    """Code length and order do not yield an integral weight."""


class DomainError(IccCtaError, ValueError):
    """Argument outside the admissible parameter domain."""


class IntegralityError(DomainError):
    """Optimal-code parameters are not integers for the requested inputs."""


class EnumerationLimitError(IccCtaError, ValueError):
    """Exhaustive enumeration requested beyond its size bound."""


class DimensionError(IccCtaError, ValueError):
    """Array shapes are inconsistent."""


class NumericalError(IccCtaError, ArithmeticError):
    """A numerical routine failed (singular system, non-PSD input, ...)."""


class SingularPilotError(NumericalError):
    """Confusing pilot vectors are collinear; the two-source estimator is undefined."""


class UnderdeterminedError(NumericalError):
    """Fewer overlapping subcarriers than channel taps."""


class ConfigError(IccCtaError, ValueError):
    """Invalid scenario configuration."""
