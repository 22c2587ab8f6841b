"""Exception hierarchy shared across the package.

``DataError`` covers anything wrong with user-supplied inputs; the CLI maps it
to exit code 2.  ``InvariantViolation`` signals a bug (exit code 3).
"""


class DataError(ValueError):
    """Invalid input data or file."""


class SchemaError(DataError):
    pass


class RecordError(DataError):
    """A row-level problem in an encounter CSV."""

    def __init__(self, message: str, row: int | None = None, value: str | None = None):
        self.row = row
        self.value = value
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class CyclicGraphError(DataError):
    pass


class ZeroProbabilityEvidence(DataError):
    pass


class EventLogError(DataError):
    pass


class HazardTableError(DataError):
    pass


class ConvergenceError(DataError):
    pass


class InvariantViolation(RuntimeError):
    pass


class StageError(DataError):
    """A pipeline stage failed on its inputs."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")
