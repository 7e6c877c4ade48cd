"""Exception types raised by cocyclelab."""


class CocycleLabError(Exception):
    """Base class for all library errors."""


class WindowExhaustedError(CocycleLabError, IndexError):
    """A symbolic point was queried outside the coordinates it defines."""


class EnumerationLimitError(CocycleLabError):
    """Periodic-point enumeration would exceed the configured cap."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class PreconditionError(CocycleLabError, ValueError):
    """An operation was called outside its domain."""


class SingularMatrixError(CocycleLabError, ArithmeticError):
    """A matrix is singular or its condition number exceeds the cap."""


class CoverageError(CocycleLabError):
    """A dense-orbit net could not reach the requested mesh."""

    def __init__(self, message, achieved_mesh=None):
        super().__init__(message)
        self.achieved_mesh = achieved_mesh


class DegenerateSpectrumError(CocycleLabError):
    """Lyapunov exponents are too close to resolve a splitting."""


class AuditRefusal(CocycleLabError):
    """A construction was refused because the periodic-data audit failed."""

    def __init__(self, message, audit=None):
        super().__init__(message)
        self.audit = audit


class ConfigError(CocycleLabError, ValueError):
    """An experiment configuration failed validation."""
