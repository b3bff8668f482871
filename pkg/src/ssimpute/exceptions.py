"""Exception hierarchy.

Errors derive from one of two roots so the CLI can map them to exit codes:
``DataError`` (bad input, exit 2) and ``NumericError`` (numerical failure,
exit 3).
"""


class SSIError(Exception):
    """Base class for all package errors."""


class DataError(SSIError, ValueError):
    pass


class NumericError(SSIError, ArithmeticError):
    pass


class DimensionMismatch(DataError):
    pass


class FullyMissingColumn(DataError):
    def __init__(self, column, name=None):
        self.column = column
        label = f"{column}" if name is None else f"{column} ({name!r})"
        super().__init__(f"column {label} has no observed entries")


class UndeclaredClass(DataError):
    def __init__(self, row, column, value=None):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"entry ({row}, {column}) holds undeclared class {value!r}")


class EmptyObservedSet(DataError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column} has no observed subjects")


class ParseError(DataError):
    def __init__(self, line, column, token):
        self.line = line
        self.column = column
        self.token = token
        super().__init__(
            f"cannot parse token {token!r} at line {line}, column {column!r}")


class SchemaMismatch(DataError):
    pass


class IoError(DataError):
    """Unreadable input or unwritable output path."""


class CalibrationFailed(NumericError):
    pass


class NonPositiveDefiniteCovariance(NumericError):
    pass


class AllRowsDegenerate(NumericError):
    pass


class AllGridPointsFailed(NumericError):
    pass


class SingularDesign(NumericError):
    pass


class LeverageOne(NumericError):
    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__(
            f"leverage is numerically one for rows {self.rows[:10]}")
