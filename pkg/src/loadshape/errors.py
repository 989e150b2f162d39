"""Exception hierarchy shared across the toolkit."""


class LoadShapeError(Exception):
    """Base class for all toolkit errors."""


class MissingFileError(LoadShapeError):
    """A dwelling file or config file does not exist."""


class MalformedHeaderError(LoadShapeError):
    """A dwelling file header does not match the expected column schema."""


class DuplicateTimestampError(LoadShapeError):
    """The same (date, hour) appears twice within one dwelling file."""


class DatasetError(LoadShapeError):
    """Dataset-level ingest failure: empty directory or aggregated per-file errors."""

    def __init__(self, message, file_errors=None):
        super().__init__(message)
        self.file_errors = list(file_errors or [])


class NotImputableError(LoadShapeError):
    """A day with no present readings cannot be imputed."""


class DegenerateDayError(LoadShapeError):
    """Imputation fraction undefined: averages (or readings) sum to zero over present hours."""


class MissingAverageError(LoadShapeError):
    """No average-table entry exists for the requested (property, day type) cell."""


class UnlabeledDayError(LoadShapeError):
    """An enabled environment axis has no data for the requested date."""


class SchemeError(LoadShapeError):
    """A day-type scheme, holiday, or schema-map config file is invalid."""


class ReferenceFileError(LoadShapeError):
    """A reference-profile CSV is malformed."""


class InstanceTooLargeError(LoadShapeError):
    """Exhaustive partition search would exceed the enumeration budget."""
