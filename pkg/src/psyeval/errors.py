"""Exception hierarchy.

The CLI maps the three branches below onto exit codes: configuration
problems exit 1, data problems exit 2, numerical failures exit 3.
"""


class PsyevalError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PsyevalError, ValueError):
    """Invalid or unknown configuration."""


class DataError(PsyevalError, ValueError):
    """The input data cannot support the requested analysis."""


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EmptyDatasetError(DataError):
    pass


class ScoreRangeError(DataError):
    pass


class AlignmentError(DataError):
    pass


class DegenerateInputError(DataError):
    """A constant vector (or equivalent) where variation is required."""


class InsufficientDataError(DataError):
    pass


class DomainError(DataError):
    """A value lies outside the domain of a transform."""


class NumericalError(PsyevalError, ArithmeticError):
    pass


class ConvergenceError(NumericalError):
    """An iterative routine hit its iteration limit.

    The last iterate is kept on ``last_iterate`` so callers can inspect or
    accept it.
    """

    def __init__(self, message, last_iterate=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class SingularMatrixError(NumericalError):
    pass


class SeparationError(NumericalError):
    pass
