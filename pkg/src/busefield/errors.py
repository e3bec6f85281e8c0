"""Exception hierarchy shared by all busefield modules."""


class BusefieldError(Exception):
    """Base class for all package errors."""


class DomainError(BusefieldError):
    """A point lies outside the chart domain."""


class ValidationError(BusefieldError):
    """Input data violates a structural invariant (e.g. non-SPD tensor)."""


class PreconditionError(BusefieldError):
    """An operation was called with arguments violating its contract."""


class ConvergenceError(BusefieldError):
    """An iterative solver failed to converge within its budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CoverageError(BusefieldError):
    """Requested evaluation region is not covered by valid field cells."""


class DataError(BusefieldError):
    """A field cell needed by the operation is masked or missing."""


class CorayValidationError(BusefieldError):
    """A traced coray failed the unit-slope descent test."""

    def __init__(self, message, slope_defect=None):
        super().__init__(message)
        self.slope_defect = slope_defect


class InconsistencyError(BusefieldError):
    """Two quantities that must agree (per a verified identity) do not."""


class ConfigError(BusefieldError):
    """An experiment config file is malformed or contains unknown keys."""
