"""Domain row types stored in the metadata catalog.

These are plain immutable dataclasses; persistence and invariants live in
:mod:`pulsedb.catalog`.  JSON helpers keep one canonical wire shape used by
the catalog export, the HTTP service and the golden-file tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .identifier import ChannelKey


class RecordType(str, Enum):
    EXPERIMENT = "EXPERIMENT"
    MODEL = "MODEL"
    VOID = "VOID"


class SignalKind(str, Enum):
    FILE = "FILE"
    LINEAR = "LINEAR"


class Tier(str, Enum):
    CACHE = "CACHE"
    PERMANENT = "PERMANENT"


class FileStatus(str, Enum):
    OPEN = "OPEN"
    CLOSED = "CLOSED"


@dataclass(frozen=True)
class Record:
    record_number: int
    record_type: RecordType
    created_at: str
    description: str = ""

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "record_number": self.record_number,
            "record_type": self.record_type.value,
            "created_at": self.created_at,
            "description": self.description,
        }


@dataclass(frozen=True)
class GenericSignal:
    id: int
    name: str
    data_source: str
    alias: str | None
    kind: SignalKind
    units: str = ""
    description: str = ""
    axes: tuple[int, ...] = ()

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "data_source": self.data_source,
            "alias": self.alias,
            "kind": self.kind.value,
            "units": self.units,
            "description": self.description,
            "axes": list(self.axes),
        }


@dataclass(frozen=True)
class LinearTime:
    t0: float
    dt: float


@dataclass(frozen=True)
class AxisRef:
    generic_id: int
    revision: int


TimeAxis = LinearTime | AxisRef | None


def time_axis_to_json(axis: TimeAxis) -> dict[str, Any] | None:
    if axis is None:
        return None
    if isinstance(axis, LinearTime):
        return {"kind": "linear", "t0": axis.t0, "dt": axis.dt}
    return {"kind": "ref", "generic_id": axis.generic_id, "revision": axis.revision}


def time_axis_from_json(obj: dict[str, Any] | None) -> TimeAxis:
    if obj is None:
        return None
    if obj["kind"] == "linear":
        return LinearTime(float(obj["t0"]), float(obj["dt"]))
    return AxisRef(int(obj["generic_id"]), int(obj["revision"]))


@dataclass(frozen=True)
class DataSignal:
    """One stored realization of a generic signal.

    ``axis_revisions`` has one slot per axis of the generic signal; a slot
    is ``None`` when that dimension's axis is not materialized (e.g. the
    leading dimension is described by a linear time axis instead).
    """

    generic_id: int
    record_number: int
    revision: int
    offset: float = 0.0
    coefficient: float = 1.0
    time_axis: TimeAxis = None
    axis_revisions: tuple[AxisRef | None, ...] = ()
    data_file: int | None = None
    dataset_name: str | None = None
    created_at: str = ""
    note: str = ""

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "generic_id": self.generic_id,
            "record_number": self.record_number,
            "revision": self.revision,
            "offset": self.offset,
            "coefficient": self.coefficient,
            "time_axis": time_axis_to_json(self.time_axis),
            "axis_revisions": [
                None if a is None else [a.generic_id, a.revision] for a in self.axis_revisions
            ],
            "data_file": self.data_file,
            "dataset_name": self.dataset_name,
            "created_at": self.created_at,
            "note": self.note,
        }


@dataclass(frozen=True)
class DataFileRef:
    id: int
    record_number: int
    relative_path: str
    tier: Tier
    status: FileStatus
    checksum: int | None = None
    size_bytes: int = 0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "record_number": self.record_number,
            "relative_path": self.relative_path,
            "tier": self.tier.value,
            "status": self.status.value,
            "checksum": self.checksum,
            "size_bytes": self.size_bytes,
        }


@dataclass(frozen=True)
class ChannelMapping:
    key: ChannelKey
    generic_id: int
    config_text: str
    valid_from_record: int

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "computer_id": self.key.computer_id,
            "board_id": self.key.board_id,
            "channel_id": self.key.channel_id,
            "generic_id": self.generic_id,
            "config_text": self.config_text,
            "valid_from_record": self.valid_from_record,
        }


class RunStatus(str, Enum):
    OK = "OK"
    FAILED = "FAILED"
    SKIPPED_FRESH = "SKIPPED_FRESH"
    TIMEOUT = "TIMEOUT"


@dataclass(frozen=True)
class TaskSpec:
    name: str
    inputs: frozenset[int]
    outputs: frozenset[int]
    command: tuple[str, ...]
    timeout_s: float = 60.0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "inputs": sorted(self.inputs),
            "outputs": sorted(self.outputs),
            "command": list(self.command),
            "timeout_s": self.timeout_s,
        }


@dataclass(frozen=True)
class TaskRunLog:
    task_name: str
    record_number: int
    started: float
    ended: float
    status: RunStatus
    input_revisions: dict[int, int] = field(default_factory=dict)
    output_revisions: dict[int, int] = field(default_factory=dict)
    detail: str = ""

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "task_name": self.task_name,
            "record_number": self.record_number,
            "started": self.started,
            "ended": self.ended,
            "status": self.status.value,
            "input_revisions": {str(k): v for k, v in sorted(self.input_revisions.items())},
            "output_revisions": {str(k): v for k, v in sorted(self.output_revisions.items())},
            "detail": self.detail,
        }
