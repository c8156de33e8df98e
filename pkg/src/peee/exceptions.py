"""Exception and warning classes raised across the package."""


class PeeeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(PeeeError):
    """Problems with the input data (exit code 2 in the CLI)."""


class ParseError(DataError, ValueError):
    """Malformed delimited text or formula.

    ``line`` is set for file errors, ``position`` (0-based character offset)
    for formula errors.
    """

    def __init__(self, message, line=None, position=None):
        super().__init__(message)
        self.line = line
        self.position = position


class SchemaError(DataError, ValueError):
    pass


class MissingDataError(DataError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigurationError(PeeeError, ValueError):
    pass


class NumericalError(PeeeError):
    """Numerical failure (exit code 3 in the CLI)."""


class SingularDesignError(NumericalError, ValueError):
    def __init__(self, message, dependent_columns=()):
        super().__init__(message)
        self.dependent_columns = tuple(dependent_columns)


class ConvergenceError(NumericalError):
    def __init__(self, message, last_iterate=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class DegenerateLevelError(NumericalError, ValueError):
    pass


class UnsupportedRegimeError(ConfigurationError):
    pass


class StateError(PeeeError):
    pass


class JacobianError(NumericalError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class BootstrapError(NumericalError):
    pass


class SeparationWarning(UserWarning):
    """Some fitted logit coefficient is implausibly large."""
