"""Exception hierarchy shared by the simulation, pricing and CLI layers."""


class OuSpotError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(OuSpotError, ValueError):
    """A distribution or process parameter is outside its domain."""


class StepSizeError(ParameterDomainError):
    """The time step is too coarse for a scheme (e.g. Euler needs lambda*dt < 1)."""


class DriftDivergenceError(ParameterDomainError):
    """The risk-neutral drift is infinite because E[exp(jump factor)] diverges."""


class FeasibilityError(OuSpotError, ValueError):
    """A storage/swing contract cannot reach its terminal volume target."""


class BasisDegeneracyError(OuSpotError, ArithmeticError):
    """The LSMC regression design matrix is rank deficient."""


class ConfigError(OuSpotError, ValueError):
    """A configuration file or CLI override is invalid.

    ``key`` names the offending configuration entry when known.
    """

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class BuildProfileError(OuSpotError, RuntimeError):
    """Timings were requested from an unoptimised (JIT-disabled) build."""
