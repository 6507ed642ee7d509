"""pulsedb: an append-only, revisioned data store for pulsed-experiment
signals, with a metadata catalog, write-once container files, a signal
identifier grammar, dependency-driven post-processing and a JSON/HTTP
service."""

from .catalog import Catalog
from .container import DTYPES, Dataset
from .daq import IngestReport, ShotConfig, resolve_and_read, run_shot
from .errors import PulseDBError
from .filestore import FileStore
from .identifier import (
    ByAlias,
    ById,
    ByName,
    ChannelKey,
    GenericLocator,
    Schema,
    SignalRef,
    format_gs_str_id,
    format_str_id,
    parse_gs_str_id,
    parse_str_id,
)
from .models import (
    AxisRef,
    ChannelMapping,
    DataFileRef,
    DataSignal,
    FileStatus,
    GenericSignal,
    LinearTime,
    Record,
    RecordType,
    RunStatus,
    SignalKind,
    TaskRunLog,
    TaskSpec,
    Tier,
)
from .postproc import TaskGraph, add_task, check_freshness, load_graph, load_manifest, plan, run
from .service import Service, serve
from .signals import Signal, apply_transform
from .store import Config, Store

__version__ = "0.1.0"

__all__ = [
    "AxisRef",
    "ByAlias",
    "ById",
    "ByName",
    "Catalog",
    "ChannelKey",
    "ChannelMapping",
    "Config",
    "DTYPES",
    "DataFileRef",
    "DataSignal",
    "Dataset",
    "FileStatus",
    "FileStore",
    "GenericLocator",
    "GenericSignal",
    "IngestReport",
    "LinearTime",
    "PulseDBError",
    "Record",
    "RecordType",
    "RunStatus",
    "Schema",
    "Service",
    "ShotConfig",
    "Signal",
    "SignalKind",
    "SignalRef",
    "Store",
    "TaskGraph",
    "TaskRunLog",
    "TaskSpec",
    "Tier",
    "add_task",
    "apply_transform",
    "check_freshness",
    "format_gs_str_id",
    "format_str_id",
    "load_graph",
    "load_manifest",
    "parse_gs_str_id",
    "parse_str_id",
    "plan",
    "resolve_and_read",
    "run",
    "run_shot",
    "serve",
]
