"""Exception types shared across the package."""


class CohsimError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CohsimError):
    """Invalid network, device or scenario configuration."""


class InitializationError(CohsimError):
    """Power flow or device initialization failed."""


class SolveError(CohsimError):
    """Algebraic (network) solve failed."""


class StepError(CohsimError):
    """Integration step was rejected (Newton non-convergence)."""

    def __init__(self, message, time=None, worst_equation=None):
        super().__init__(message)
        self.time = time
        self.worst_equation = worst_equation
