"""Exception hierarchy.

Usage errors are caller mistakes (bad argument, unknown column). Data errors
come from the contents of a file or table. The CLI maps the two families onto
different exit codes.
"""


class FcmiError(Exception):
    """Base class for every error raised by this package."""


class UsageError(FcmiError, ValueError):
    pass


class DataError(FcmiError):
    pass


class CsvParseError(DataError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    pass


class FullyMissingColumn(DataError):
    pass


class NoPredictors(DataError):
    """No candidate column has a defined correlation with the target."""


class InsufficientData(DataError):
    """Too few observed rows to fit a per-column model."""


class DegenerateBatch(DataError):
    """Batch too short to compute correlations on."""
