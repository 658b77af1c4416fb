"""Exception hierarchy shared by the simulator, analysis and command line."""


class IonLabError(Exception):
    """Base class for all toolkit errors."""


class DomainError(IonLabError, ValueError):
    """An argument lies outside the physical domain of an operation."""


class SolverError(IonLabError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IntegratorError(IonLabError):
    """Time evolution lost accuracy (step underflow, positivity loss)."""


class ParseError(IonLabError):
    """Sequence/config text could not be parsed.

    ``line`` and ``column`` are 1-based; ``column`` may be None when the
    problem concerns a whole line or the whole program.
    """

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class FitError(IonLabError):
    """A fit did not converge or the data cannot support it."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConditioningError(FitError):
    """The fit basis is too ill-conditioned to separate its components."""


class SchemaError(IonLabError, ValueError):
    """A data file does not follow the expected CSV schema."""
