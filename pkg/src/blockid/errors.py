"""Exception hierarchy shared by all blockid modules."""


class BlockIdError(Exception):
    """Base class for every error raised by blockid."""


class DataError(BlockIdError, ValueError):
    """Malformed or physically invalid input data."""


class InvalidTraceError(DataError):
    pass


class NormalizationError(DataError):
    pass


class DatasetParseError(DataError):
    """A dataset file violates the CSV contract.

    ``row`` is the 1-based data row (``None`` for header problems),
    ``line`` the 1-based line in the file and ``column`` the offending
    column name or index when known.
    """

    def __init__(self, message, row=None, line=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.line = line
        self.column = column


class ShapeError(DataError):
    pass


class InvalidModelError(BlockIdError, ValueError):
    pass


class UndefinedGainError(InvalidModelError):
    pass


class ModelFileError(BlockIdError, ValueError):
    pass


class UndefinedFitError(BlockIdError, ValueError):
    pass


class UndefinedScaleError(BlockIdError, ValueError):
    pass


class DomainError(BlockIdError, ValueError):
    pass


class InsufficientDataError(DomainError):
    pass


class NegativePorosityError(DomainError):
    pass


class CalibrationRangeError(DomainError):
    pass


class NoCycleError(DataError):
    pass


class UnknownPlantError(BlockIdError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown plant"


class EstimationFailedError(BlockIdError, RuntimeError):
    """No admissible candidate survived the search.

    ``diagnostics`` maps a candidate label to the reason it was discarded.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class PartialResultError(EstimationFailedError):
    """A bundle estimation failed part-way; ``completed`` holds finished members."""

    def __init__(self, message, completed=None, diagnostics=None):
        super().__init__(message, diagnostics)
        self.completed = list(completed or [])
