"""Exception hierarchy shared by all store components.

Every error carries a short ``code`` (the class name without the ``Error``
suffix) which the HTTP service and the CLI use verbatim, so client-visible
error identity never depends on exception class paths.
"""

from __future__ import annotations


class PulseDBError(Exception):
    """Base class for all domain errors raised by this package."""

    @property
    def code(self) -> str:
        name = type(self).__name__
        return name[:-5] if name.endswith("Error") else name


# --- identifier ---------------------------------------------------------


class IdentifierSyntaxError(PulseDBError):
    """Malformed string identifier; reports position and expected tokens."""

    def __init__(self, text: str, position: int, expected: tuple[str, ...]):
        self.text = text
        self.position = position
        self.expected = expected
        super().__init__(
            f"bad identifier {text!r} at position {position}: "
            f"expected {' or '.join(expected)}"
        )

    @property
    def code(self) -> str:
        return "SyntaxError"


class UnknownSchemaError(PulseDBError):
    def __init__(self, schema: str):
        self.schema = schema
        super().__init__(f"unknown identifier schema {schema!r} (expected CDB, DAQ or FS)")


class InvalidRefError(PulseDBError):
    pass


# --- catalog -------------------------------------------------------------


class StorageFailureError(PulseDBError):
    @property
    def code(self) -> str:
        return "StorageFailure"


class NotFoundError(PulseDBError):
    pass


class DuplicateNameError(PulseDBError):
    pass


class DuplicateAliasError(PulseDBError):
    pass


class UnknownAxisError(PulseDBError):
    pass


class UnknownGenericError(PulseDBError):
    pass


class UnknownRecordError(PulseDBError):
    pass


class RevisionNotAllocatedError(PulseDBError):
    pass


class DanglingAxisError(PulseDBError):
    pass


class FileStillOpenError(PulseDBError):
    pass


class NoMappingError(PulseDBError):
    pass


class DuplicateValidFromError(PulseDBError):
    pass


# --- filestore -----------------------------------------------------------


class FileClosedError(PulseDBError):
    pass


class AlreadyClosedError(PulseDBError):
    pass


class FileOpenError(PulseDBError):
    pass


class DuplicateDatasetError(PulseDBError):
    pass


class ShapePayloadMismatchError(PulseDBError):
    pass


class ChecksumMismatchError(PulseDBError):
    pass


class InvalidContainerError(PulseDBError):
    pass


# --- signal API ----------------------------------------------------------


class KindMismatchError(PulseDBError):
    pass


class MissingLengthError(PulseDBError):
    pass


class ShapeMismatchError(PulseDBError):
    pass


class UnsupportedDtypeError(PulseDBError):
    pass


# --- post-processing -----------------------------------------------------


class CycleDetectedError(PulseDBError):
    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__(f"task graph cycle: {' -> '.join(self.cycle + self.cycle[:1])}")


class DuplicateProducerError(PulseDBError):
    def __init__(self, signal_id: int, existing_task: str):
        self.signal_id = signal_id
        self.existing_task = existing_task
        super().__init__(
            f"output signal {signal_id} is already produced by task {existing_task!r}"
        )


class DuplicateTaskNameError(PulseDBError):
    pass


# --- service -------------------------------------------------------------


class BindFailureError(PulseDBError):
    pass
