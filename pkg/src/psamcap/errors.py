"""Exception hierarchy.

``ConfigError`` covers anything a user can fix by editing a config or call
arguments. ``ContractViolation`` means a numeric precondition or invariant
tripped inside the library. The CLI maps them to exit codes 2 and 3.
"""


class PsamError(Exception):
    """Base class for all package errors."""


class ConfigError(PsamError, ValueError):
    """Invalid experiment or scheme configuration."""

    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)

    def at_line(self, line):
        """Copy of this error tagged with a config line number."""
        return type(self)(self.message, self.field, line)


class ContractViolation(PsamError, ValueError):
    """A numeric precondition or invariant does not hold."""


class DomainError(ContractViolation):
    pass


class NotHermitianError(ContractViolation):
    pass


class NotPSDError(ContractViolation):
    pass


class SingularMatrixError(ContractViolation):
    def __init__(self, message, smallest_eigenvalue):
        self.smallest_eigenvalue = smallest_eigenvalue
        super().__init__(f"{message} (smallest eigenvalue {smallest_eigenvalue:.3e})")


class NotComparableError(ContractViolation):
    """Vectors with different sums cannot be ordered by majorization."""


class RegimeError(ContractViolation):
    """gamma is inconsistent with the requested branch of the alpha* formula."""


class InsufficientTrainingError(ConfigError):
    pass


class InsufficientSamplingError(ConfigError):
    pass
