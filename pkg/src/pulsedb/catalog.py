"""Durable metadata catalog: records, generic and data signals, data-file
descriptors, channel mappings, post-processing tasks and their run logs.

Backed by a single-file sqlite database in WAL mode, which provides the
required atomic commit and multi-thread/multi-process linearizability on
one host.  Revision allocation is the single synchronization point for
writers: it reserves ``max+1`` inside an immediate transaction, so two
concurrent callers can never obtain the same revision.

Data-signal rows move through two states: ``ALLOCATED`` (revision number
reserved) and ``STORED`` (row filled in, immutable thereafter).  Read
paths only ever see STORED rows.
"""

from __future__ import annotations

import hashlib
import json
import os
import sqlite3
import threading
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator

from .errors import (
    DanglingAxisError,
    DuplicateAliasError,
    DuplicateNameError,
    DuplicateTaskNameError,
    DuplicateValidFromError,
    FileStillOpenError,
    InvalidRefError,
    KindMismatchError,
    NoMappingError,
    NotFoundError,
    RevisionNotAllocatedError,
    StorageFailureError,
    UnknownAxisError,
    UnknownGenericError,
    UnknownRecordError,
)
from .identifier import (
    ByAlias,
    ById,
    ByName,
    ChannelKey,
    GenericLocator,
    Schema,
    SignalRef,
    format_gs_str_id,
    is_valid_alias,
    is_valid_token,
    parse_gs_str_id,
)
from .models import (
    AxisRef,
    ChannelMapping,
    DataFileRef,
    DataSignal,
    FileStatus,
    GenericSignal,
    Record,
    RecordType,
    RunStatus,
    SignalKind,
    TaskRunLog,
    TaskSpec,
    Tier,
    time_axis_from_json,
    time_axis_to_json,
)

_SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS records(
    record_number  INTEGER PRIMARY KEY,
    record_type    TEXT NOT NULL,
    created_at     TEXT NOT NULL,
    description    TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS generic_signals(
    id           INTEGER PRIMARY KEY AUTOINCREMENT,
    name         TEXT NOT NULL,
    data_source  TEXT NOT NULL,
    alias        TEXT,
    kind         TEXT NOT NULL,
    units        TEXT NOT NULL DEFAULT '',
    description  TEXT NOT NULL DEFAULT '',
    axes         TEXT NOT NULL DEFAULT '[]',
    UNIQUE(name, data_source)
);
CREATE UNIQUE INDEX IF NOT EXISTS idx_gs_alias
    ON generic_signals(alias) WHERE alias IS NOT NULL;
CREATE TABLE IF NOT EXISTS data_files(
    id             INTEGER PRIMARY KEY AUTOINCREMENT,
    record_number  INTEGER NOT NULL REFERENCES records(record_number),
    relative_path  TEXT NOT NULL DEFAULT '',
    tier           TEXT NOT NULL,
    status         TEXT NOT NULL,
    checksum       INTEGER,
    size_bytes     INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS data_signals(
    generic_id     INTEGER NOT NULL REFERENCES generic_signals(id),
    record_number  INTEGER NOT NULL REFERENCES records(record_number),
    revision       INTEGER NOT NULL,
    state          TEXT NOT NULL DEFAULT 'ALLOCATED',
    offset         REAL NOT NULL DEFAULT 0,
    coefficient    REAL NOT NULL DEFAULT 1,
    time_axis      TEXT,
    axis_revisions TEXT NOT NULL DEFAULT '[]',
    data_file      INTEGER REFERENCES data_files(id),
    dataset_name   TEXT,
    created_at     TEXT NOT NULL DEFAULT '',
    note           TEXT NOT NULL DEFAULT '',
    PRIMARY KEY(generic_id, record_number, revision)
);
CREATE INDEX IF NOT EXISTS idx_ds_file ON data_signals(data_file);
CREATE TABLE IF NOT EXISTS channel_mappings(
    computer_id        TEXT NOT NULL,
    board_id           TEXT NOT NULL,
    channel_id         TEXT NOT NULL,
    generic_id         INTEGER NOT NULL REFERENCES generic_signals(id),
    config_text        TEXT NOT NULL DEFAULT '',
    valid_from_record  INTEGER NOT NULL,
    PRIMARY KEY(computer_id, board_id, channel_id, valid_from_record)
);
CREATE TABLE IF NOT EXISTS tasks(
    name       TEXT PRIMARY KEY,
    inputs     TEXT NOT NULL,
    outputs    TEXT NOT NULL,
    command    TEXT NOT NULL,
    timeout_s  REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS task_run_logs(
    id               INTEGER PRIMARY KEY AUTOINCREMENT,
    task_name        TEXT NOT NULL,
    record_number    INTEGER NOT NULL,
    started          REAL NOT NULL,
    ended            REAL NOT NULL,
    status           TEXT NOT NULL,
    input_revisions  TEXT NOT NULL DEFAULT '{}',
    output_revisions TEXT NOT NULL DEFAULT '{}',
    detail           TEXT NOT NULL DEFAULT ''
);
"""


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


class Catalog:
    """Metadata store over one sqlite file.

    All public methods are atomic; composite operations can be grouped with
    :meth:`transaction` (reentrant within a thread).  Connections are kept
    per thread and reopened after a fork.
    """

    def __init__(self, path: str | Path, now_fn: Callable[[], datetime] | None = None):
        self.path = Path(path)
        self._now_fn = now_fn or _utc_now
        self._local = threading.local()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        conn = self._conn()
        conn.executescript(_SCHEMA_SQL)

    # -- connection & transaction plumbing --------------------------------

    def _conn(self) -> sqlite3.Connection:
        pid = os.getpid()
        conn = getattr(self._local, "conn", None)
        if conn is None or getattr(self._local, "pid", None) != pid:
            conn = sqlite3.connect(str(self.path), timeout=60.0, isolation_level=None)
            conn.row_factory = sqlite3.Row
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA foreign_keys=ON")
            conn.execute("PRAGMA busy_timeout=60000")
            self._local.conn = conn
            self._local.pid = pid
            self._local.depth = 0
        return conn

    @contextmanager
    def transaction(self, immediate: bool = True) -> Iterator[sqlite3.Connection]:
        """Group several catalog calls into one atomic unit.

        ``immediate=False`` opens a read snapshot instead of taking the
        write lock (for consistent multi-table reads like export/audit).
        """
        conn = self._conn()
        if self._local.depth > 0:
            self._local.depth += 1
            try:
                yield conn
            finally:
                self._local.depth -= 1
            return
        self._local.depth = 1
        try:
            conn.execute("BEGIN IMMEDIATE" if immediate else "BEGIN")
        except sqlite3.OperationalError as e:
            self._local.depth = 0
            raise StorageFailureError(str(e)) from e
        try:
            yield conn
        except BaseException:
            conn.execute("ROLLBACK")
            raise
        else:
            conn.execute("COMMIT")
        finally:
            self._local.depth = 0

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    def _now_iso(self) -> str:
        return self._now_fn().isoformat(timespec="microseconds")

    # -- records -----------------------------------------------------------

    def create_record(self, record_type: RecordType | str, description: str = "") -> Record:
        rtype = RecordType(record_type)
        created = self._now_iso()
        with self.transaction() as conn:
            row = conn.execute("SELECT COALESCE(MAX(record_number),0)+1 AS n FROM records").fetchone()
            number = int(row["n"])
            conn.execute(
                "INSERT INTO records(record_number, record_type, created_at, description)"
                " VALUES (?,?,?,?)",
                (number, rtype.value, created, description),
            )
        return Record(number, rtype, created, description)

    def get_record(self, record_number: int) -> Record:
        row = self._conn().execute(
            "SELECT * FROM records WHERE record_number=?", (record_number,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"record {record_number} does not exist")
        return Record(
            row["record_number"], RecordType(row["record_type"]), row["created_at"], row["description"]
        )

    def record_exists(self, record_number: int) -> bool:
        row = self._conn().execute(
            "SELECT 1 FROM records WHERE record_number=?", (record_number,)
        ).fetchone()
        return row is not None

    def resolve_record_number(self, number: int) -> int:
        """Resolve a possibly-relative record number (-k = k-th latest)."""
        if number > 0:
            if not self.record_exists(number):
                raise NotFoundError(f"record {number} does not exist")
            return number
        if number == 0:
            raise NotFoundError("record number 0 never exists")
        row = self._conn().execute(
            "SELECT record_number FROM records ORDER BY record_number DESC LIMIT 1 OFFSET ?",
            (-number - 1,),
        ).fetchone()
        if row is None:
            raise NotFoundError(f"no record at relative position {number}")
        return int(row["record_number"])

    # -- generic signals ----------------------------------------------------

    def create_generic_signal(
        self,
        name: str,
        data_source: str,
        alias: str | None = None,
        kind: SignalKind | str = SignalKind.FILE,
        units: str = "",
        description: str = "",
        axes: tuple[int, ...] | list[int] = (),
    ) -> GenericSignal:
        kind = SignalKind(kind)
        if not (is_valid_token(name) and is_valid_token(data_source)):
            raise InvalidRefError(f"name/data_source must be identifier tokens: {name!r}.{data_source!r}")
        if alias is not None and not is_valid_alias(alias):
            raise InvalidRefError(f"alias is not a usable identifier token: {alias!r}")
        axes = tuple(int(a) for a in axes)
        with self.transaction() as conn:
            if conn.execute(
                "SELECT 1 FROM generic_signals WHERE name=? AND data_source=?", (name, data_source)
            ).fetchone():
                raise DuplicateNameError(f"generic signal {name}.{data_source} already exists")
            if alias is not None and conn.execute(
                "SELECT 1 FROM generic_signals WHERE alias=?", (alias,)
            ).fetchone():
                raise DuplicateAliasError(f"alias {alias!r} already taken")
            for axis_id in axes:
                if not conn.execute(
                    "SELECT 1 FROM generic_signals WHERE id=?", (axis_id,)
                ).fetchone():
                    raise UnknownAxisError(f"axis generic signal {axis_id} does not exist")
            cur = conn.execute(
                "INSERT INTO generic_signals(name, data_source, alias, kind, units, description, axes)"
                " VALUES (?,?,?,?,?,?,?)",
                (name, data_source, alias, kind.value, units, description, json.dumps(list(axes))),
            )
            gid = int(cur.lastrowid)
        return GenericSignal(gid, name, data_source, alias, kind, units, description, axes)

    @staticmethod
    def _generic_from_row(row: sqlite3.Row) -> GenericSignal:
        return GenericSignal(
            id=row["id"],
            name=row["name"],
            data_source=row["data_source"],
            alias=row["alias"],
            kind=SignalKind(row["kind"]),
            units=row["units"],
            description=row["description"],
            axes=tuple(json.loads(row["axes"])),
        )

    def get_generic(self, generic_id: int) -> GenericSignal:
        row = self._conn().execute(
            "SELECT * FROM generic_signals WHERE id=?", (generic_id,)
        ).fetchone()
        if row is None:
            raise UnknownGenericError(f"generic signal {generic_id} does not exist")
        return self._generic_from_row(row)

    def resolve_generic(self, locator: GenericLocator | str | int) -> GenericSignal:
        if isinstance(locator, str):
            locator = parse_gs_str_id(locator)
        elif isinstance(locator, int):
            locator = ById(locator)
        conn = self._conn()
        if isinstance(locator, ByAlias):
            row = conn.execute(
                "SELECT * FROM generic_signals WHERE alias=?", (locator.alias,)
            ).fetchone()
        elif isinstance(locator, ByName):
            row = conn.execute(
                "SELECT * FROM generic_signals WHERE name=? AND data_source=?",
                (locator.name, locator.source),
            ).fetchone()
        elif isinstance(locator, ById):
            row = conn.execute(
                "SELECT * FROM generic_signals WHERE id=?", (locator.id,)
            ).fetchone()
        else:
            raise InvalidRefError(f"not a generic locator: {locator!r}")
        if row is None:
            raise NotFoundError(f"no generic signal for locator {format_gs_str_id(locator)!r}")
        return self._generic_from_row(row)

    def list_generic_signals(self) -> list[GenericSignal]:
        rows = self._conn().execute("SELECT * FROM generic_signals ORDER BY id").fetchall()
        return [self._generic_from_row(r) for r in rows]

    # -- revisions & data signals -------------------------------------------

    def allocate_revision(self, generic_id: int, record_number: int) -> int:
        with self.transaction() as conn:
            if not conn.execute(
                "SELECT 1 FROM generic_signals WHERE id=?", (generic_id,)
            ).fetchone():
                raise UnknownGenericError(f"generic signal {generic_id} does not exist")
            if not conn.execute(
                "SELECT 1 FROM records WHERE record_number=?", (record_number,)
            ).fetchone():
                raise UnknownRecordError(f"record {record_number} does not exist")
            row = conn.execute(
                "SELECT COALESCE(MAX(revision),0)+1 AS r FROM data_signals"
                " WHERE generic_id=? AND record_number=?",
                (generic_id, record_number),
            ).fetchone()
            revision = int(row["r"])
            conn.execute(
                "INSERT INTO data_signals(generic_id, record_number, revision, state, created_at)"
                " VALUES (?,?,?,'ALLOCATED',?)",
                (generic_id, record_number, revision, self._now_iso()),
            )
        return revision

    def insert_data_signal(self, ds: DataSignal) -> DataSignal:
        created = self._now_iso()
        with self.transaction() as conn:
            generic = self.get_generic(ds.generic_id)
            row = conn.execute(
                "SELECT state FROM data_signals WHERE generic_id=? AND record_number=? AND revision=?",
                (ds.generic_id, ds.record_number, ds.revision),
            ).fetchone()
            if row is None or row["state"] != "ALLOCATED":
                raise RevisionNotAllocatedError(
                    f"revision {ds.revision} of generic {ds.generic_id}, record {ds.record_number}"
                    " was not allocated (or is already stored)"
                )
            self._check_axis_revisions(conn, generic, ds)
            if generic.kind is SignalKind.FILE:
                if ds.data_file is None or not ds.dataset_name:
                    raise KindMismatchError("FILE signal requires a data file and dataset name")
                frow = conn.execute(
                    "SELECT status FROM data_files WHERE id=?", (ds.data_file,)
                ).fetchone()
                if frow is None:
                    raise NotFoundError(f"data file {ds.data_file} does not exist")
                if frow["status"] != FileStatus.CLOSED.value:
                    raise FileStillOpenError(f"data file {ds.data_file} is still open")
            else:
                if ds.data_file is not None:
                    raise KindMismatchError("LINEAR signal must not reference a data file")
            conn.execute(
                "UPDATE data_signals SET state='STORED', offset=?, coefficient=?, time_axis=?,"
                " axis_revisions=?, data_file=?, dataset_name=?, created_at=?, note=?"
                " WHERE generic_id=? AND record_number=? AND revision=?",
                (
                    ds.offset,
                    ds.coefficient,
                    json.dumps(time_axis_to_json(ds.time_axis)),
                    json.dumps(
                        [None if a is None else [a.generic_id, a.revision] for a in ds.axis_revisions]
                    ),
                    ds.data_file,
                    ds.dataset_name,
                    created,
                    ds.note,
                    ds.generic_id,
                    ds.record_number,
                    ds.revision,
                ),
            )
        return DataSignal(
            generic_id=ds.generic_id,
            record_number=ds.record_number,
            revision=ds.revision,
            offset=ds.offset,
            coefficient=ds.coefficient,
            time_axis=ds.time_axis,
            axis_revisions=ds.axis_revisions,
            data_file=ds.data_file,
            dataset_name=ds.dataset_name,
            created_at=created,
            note=ds.note,
        )

    def _check_axis_revisions(
        self, conn: sqlite3.Connection, generic: GenericSignal, ds: DataSignal
    ) -> None:
        if len(ds.axis_revisions) != len(generic.axes):
            raise DanglingAxisError(
                f"generic {generic.id} has {len(generic.axes)} axes,"
                f" got {len(ds.axis_revisions)} axis revision slots"
            )
        for i, axis in enumerate(ds.axis_revisions):
            if axis is None:
                continue
            if axis.generic_id != generic.axes[i]:
                raise DanglingAxisError(
                    f"axis slot {i} must reference generic {generic.axes[i]},"
                    f" got {axis.generic_id}"
                )
            srow = conn.execute(
                "SELECT state FROM data_signals WHERE generic_id=? AND record_number=? AND revision=?",
                (axis.generic_id, ds.record_number, axis.revision),
            ).fetchone()
            if srow is None or srow["state"] != "STORED":
                raise DanglingAxisError(
                    f"axis revision {axis.revision} of generic {axis.generic_id}"
                    f" is not stored for record {ds.record_number}"
                )

    @staticmethod
    def _ds_from_row(row: sqlite3.Row) -> DataSignal:
        return DataSignal(
            generic_id=row["generic_id"],
            record_number=row["record_number"],
            revision=row["revision"],
            offset=row["offset"],
            coefficient=row["coefficient"],
            time_axis=time_axis_from_json(json.loads(row["time_axis"]) if row["time_axis"] else None),
            axis_revisions=tuple(
                None if a is None else AxisRef(a[0], a[1])
                for a in json.loads(row["axis_revisions"])
            ),
            data_file=row["data_file"],
            dataset_name=row["dataset_name"],
            created_at=row["created_at"],
            note=row["note"],
        )

    def get_data_signal(self, generic_id: int, record_number: int, revision: int) -> DataSignal:
        row = self._conn().execute(
            "SELECT * FROM data_signals WHERE generic_id=? AND record_number=? AND revision=?"
            " AND state='STORED'",
            (generic_id, record_number, revision),
        ).fetchone()
        if row is None:
            raise NotFoundError(
                f"no stored data signal (generic {generic_id}, record {record_number},"
                f" revision {revision})"
            )
        return self._ds_from_row(row)

    def stored_revisions(self, generic_id: int, record_number: int) -> list[int]:
        rows = self._conn().execute(
            "SELECT revision FROM data_signals WHERE generic_id=? AND record_number=?"
            " AND state='STORED' ORDER BY revision",
            (generic_id, record_number),
        ).fetchall()
        return [int(r["revision"]) for r in rows]

    def latest_revision(self, generic_id: int, record_number: int) -> int | None:
        row = self._conn().execute(
            "SELECT MAX(revision) AS r FROM data_signals WHERE generic_id=? AND record_number=?"
            " AND state='STORED'",
            (generic_id, record_number),
        ).fetchone()
        return None if row["r"] is None else int(row["r"])

    def resolve_revision(self, generic_id: int, record_number: int, revision: int) -> int:
        if revision > 0:
            row = self._conn().execute(
                "SELECT 1 FROM data_signals WHERE generic_id=? AND record_number=? AND revision=?"
                " AND state='STORED'",
                (generic_id, record_number, revision),
            ).fetchone()
            if row is None:
                raise NotFoundError(
                    f"revision {revision} not stored (generic {generic_id}, record {record_number})"
                )
            return revision
        if revision == 0:
            raise NotFoundError("revision 0 never exists")
        row = self._conn().execute(
            "SELECT revision FROM data_signals WHERE generic_id=? AND record_number=?"
            " AND state='STORED' ORDER BY revision DESC LIMIT 1 OFFSET ?",
            (generic_id, record_number, -revision - 1),
        ).fetchone()
        if row is None:
            raise NotFoundError(
                f"no stored revision at relative position {revision}"
                f" (generic {generic_id}, record {record_number})"
            )
        return int(row["revision"])

    def find_data_signal(self, ref: SignalRef) -> DataSignal:
        """Resolve a parsed identifier to its stored data-signal row."""
        record = self.resolve_record_number(ref.record_number)
        if ref.schema in (Schema.DAQ, Schema.FS):
            if not isinstance(ref.locator, ChannelKey):
                raise InvalidRefError("DAQ/FS reference requires a channel key")
            generic_id = self.resolve_channel(ref.locator, record)
        else:
            generic_id = self.resolve_generic(ref.locator).id
        revision = self.resolve_revision(generic_id, record, ref.revision)
        return self.get_data_signal(generic_id, record, revision)

    # -- channel mappings ----------------------------------------------------

    def set_channel_mapping(
        self,
        key: ChannelKey,
        generic_id: int,
        config_text: str = "",
        valid_from_record: int = 1,
    ) -> ChannelMapping:
        with self.transaction() as conn:
            if not conn.execute(
                "SELECT 1 FROM generic_signals WHERE id=?", (generic_id,)
            ).fetchone():
                raise UnknownGenericError(f"generic signal {generic_id} does not exist")
            try:
                conn.execute(
                    "INSERT INTO channel_mappings(computer_id, board_id, channel_id, generic_id,"
                    " config_text, valid_from_record) VALUES (?,?,?,?,?,?)",
                    (
                        key.computer_id,
                        key.board_id,
                        key.channel_id,
                        generic_id,
                        config_text,
                        valid_from_record,
                    ),
                )
            except sqlite3.IntegrityError as e:
                raise DuplicateValidFromError(
                    f"mapping for {key} already set at valid_from_record {valid_from_record}"
                ) from e
        return ChannelMapping(key, generic_id, config_text, valid_from_record)

    def resolve_channel(self, key: ChannelKey, record_number: int) -> int:
        row = self._conn().execute(
            "SELECT generic_id FROM channel_mappings"
            " WHERE computer_id=? AND board_id=? AND channel_id=? AND valid_from_record<=?"
            " ORDER BY valid_from_record DESC LIMIT 1",
            (key.computer_id, key.board_id, key.channel_id, record_number),
        ).fetchone()
        if row is None:
            raise NoMappingError(f"no channel mapping for {key} at record {record_number}")
        return int(row["generic_id"])

    def channel_mappings(self) -> list[ChannelMapping]:
        rows = self._conn().execute(
            "SELECT * FROM channel_mappings"
            " ORDER BY computer_id, board_id, channel_id, valid_from_record"
        ).fetchall()
        return [
            ChannelMapping(
                ChannelKey(r["computer_id"], r["board_id"], r["channel_id"]),
                r["generic_id"],
                r["config_text"],
                r["valid_from_record"],
            )
            for r in rows
        ]

    # -- data files -----------------------------------------------------------

    def allocate_data_file(
        self, record_number: int, make_relative_path: Callable[[int], str]
    ) -> DataFileRef:
        """Insert an OPEN cache-tier file row, deriving its path from the new id."""
        with self.transaction() as conn:
            if not conn.execute(
                "SELECT 1 FROM records WHERE record_number=?", (record_number,)
            ).fetchone():
                raise UnknownRecordError(f"record {record_number} does not exist")
            cur = conn.execute(
                "INSERT INTO data_files(record_number, relative_path, tier, status)"
                " VALUES (?,'',?,?)",
                (record_number, Tier.CACHE.value, FileStatus.OPEN.value),
            )
            file_id = int(cur.lastrowid)
            rel = make_relative_path(file_id)
            conn.execute("UPDATE data_files SET relative_path=? WHERE id=?", (rel, file_id))
        return DataFileRef(file_id, record_number, rel, Tier.CACHE, FileStatus.OPEN)

    def get_data_file(self, file_id: int) -> DataFileRef:
        row = self._conn().execute("SELECT * FROM data_files WHERE id=?", (file_id,)).fetchone()
        if row is None:
            raise NotFoundError(f"data file {file_id} does not exist")
        return DataFileRef(
            row["id"],
            row["record_number"],
            row["relative_path"],
            Tier(row["tier"]),
            FileStatus(row["status"]),
            row["checksum"],
            row["size_bytes"],
        )

    def finalize_data_file(self, file_id: int, checksum: int, size_bytes: int) -> DataFileRef:
        with self.transaction() as conn:
            ref = self.get_data_file(file_id)
            if ref.status is FileStatus.CLOSED:
                raise StorageFailureError(f"data file {file_id} is already closed")
            conn.execute(
                "UPDATE data_files SET status=?, checksum=?, size_bytes=? WHERE id=?",
                (FileStatus.CLOSED.value, checksum, size_bytes, file_id),
            )
        return self.get_data_file(file_id)

    def set_data_file_tier(self, file_id: int, tier: Tier) -> None:
        with self.transaction() as conn:
            conn.execute("UPDATE data_files SET tier=? WHERE id=?", (tier.value, file_id))

    def list_data_files(
        self, tier: Tier | None = None, status: FileStatus | None = None
    ) -> list[DataFileRef]:
        clauses, params = [], []
        if tier is not None:
            clauses.append("tier=?")
            params.append(tier.value)
        if status is not None:
            clauses.append("status=?")
            params.append(status.value)
        where = f" WHERE {' AND '.join(clauses)}" if clauses else ""
        rows = self._conn().execute(
            f"SELECT id FROM data_files{where} ORDER BY id", params
        ).fetchall()
        return [self.get_data_file(r["id"]) for r in rows]

    # -- post-processing tasks -------------------------------------------------

    def add_task_row(self, spec: TaskSpec) -> None:
        with self.transaction() as conn:
            try:
                conn.execute(
                    "INSERT INTO tasks(name, inputs, outputs, command, timeout_s) VALUES (?,?,?,?,?)",
                    (
                        spec.name,
                        json.dumps(sorted(spec.inputs)),
                        json.dumps(sorted(spec.outputs)),
                        json.dumps(list(spec.command)),
                        spec.timeout_s,
                    ),
                )
            except sqlite3.IntegrityError as e:
                raise DuplicateTaskNameError(f"task {spec.name!r} already exists") from e

    def list_tasks(self) -> list[TaskSpec]:
        rows = self._conn().execute("SELECT * FROM tasks ORDER BY name").fetchall()
        return [
            TaskSpec(
                name=r["name"],
                inputs=frozenset(json.loads(r["inputs"])),
                outputs=frozenset(json.loads(r["outputs"])),
                command=tuple(json.loads(r["command"])),
                timeout_s=r["timeout_s"],
            )
            for r in rows
        ]

    def append_run_log(self, log: TaskRunLog) -> None:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO task_run_logs(task_name, record_number, started, ended, status,"
                " input_revisions, output_revisions, detail) VALUES (?,?,?,?,?,?,?,?)",
                (
                    log.task_name,
                    log.record_number,
                    log.started,
                    log.ended,
                    log.status.value,
                    json.dumps({str(k): v for k, v in log.input_revisions.items()}),
                    json.dumps({str(k): v for k, v in log.output_revisions.items()}),
                    log.detail,
                ),
            )

    @staticmethod
    def _log_from_row(row: sqlite3.Row) -> TaskRunLog:
        return TaskRunLog(
            task_name=row["task_name"],
            record_number=row["record_number"],
            started=row["started"],
            ended=row["ended"],
            status=RunStatus(row["status"]),
            input_revisions={int(k): v for k, v in json.loads(row["input_revisions"]).items()},
            output_revisions={int(k): v for k, v in json.loads(row["output_revisions"]).items()},
            detail=row["detail"],
        )

    def run_logs(self, record_number: int | None = None, task_name: str | None = None) -> list[TaskRunLog]:
        clauses, params = [], []
        if record_number is not None:
            clauses.append("record_number=?")
            params.append(record_number)
        if task_name is not None:
            clauses.append("task_name=?")
            params.append(task_name)
        where = f" WHERE {' AND '.join(clauses)}" if clauses else ""
        rows = self._conn().execute(
            f"SELECT * FROM task_run_logs{where} ORDER BY id", params
        ).fetchall()
        return [self._log_from_row(r) for r in rows]

    def last_ok_log(self, task_name: str, record_number: int) -> TaskRunLog | None:
        row = self._conn().execute(
            "SELECT * FROM task_run_logs WHERE task_name=? AND record_number=? AND status='OK'"
            " ORDER BY id DESC LIMIT 1",
            (task_name, record_number),
        ).fetchone()
        return None if row is None else self._log_from_row(row)

    # -- export, audit, hashing -------------------------------------------------

    def export_json(self) -> str:
        """Dump the full catalog (stored rows) as one deterministic JSON document."""
        with self.transaction(immediate=False) as conn:
            records = [
                self.get_record(r["record_number"]).to_json_dict()
                for r in conn.execute("SELECT record_number FROM records ORDER BY record_number")
            ]
            generics = [g.to_json_dict() for g in self.list_generic_signals()]
            signals = [
                self._ds_from_row(r).to_json_dict()
                for r in conn.execute(
                    "SELECT * FROM data_signals WHERE state='STORED'"
                    " ORDER BY generic_id, record_number, revision"
                )
            ]
            files = [f.to_json_dict() for f in self.list_data_files()]
            mappings = [m.to_json_dict() for m in self.channel_mappings()]
            tasks = [t.to_json_dict() for t in self.list_tasks()]
            logs = [log.to_json_dict() for log in self.run_logs()]
        doc = {
            "records": records,
            "generic_signals": generics,
            "data_signals": signals,
            "data_files": files,
            "channel_mappings": mappings,
            "tasks": tasks,
            "task_run_logs": logs,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def store_hash(self) -> str:
        return hashlib.sha256(self.export_json().encode("utf-8")).hexdigest()

    def audit(self) -> list[str]:
        """Full referential-integrity check; returns human-readable violations."""
        with self.transaction(immediate=False):
            return self._audit_locked()

    def _audit_locked(self) -> list[str]:
        conn = self._conn()
        problems: list[str] = []
        generics = {g.id: g for g in self.list_generic_signals()}
        for g in generics.values():
            for axis_id in g.axes:
                if axis_id not in generics:
                    problems.append(f"generic {g.id} references missing axis generic {axis_id}")
        files = {f.id: f for f in self.list_data_files()}
        for f in files.values():
            if f.status is FileStatus.CLOSED and f.checksum is None:
                problems.append(f"closed data file {f.id} has no checksum")
            if f.tier is Tier.PERMANENT and f.status is not FileStatus.CLOSED:
                problems.append(f"permanent data file {f.id} is not closed")
        rows = conn.execute("SELECT * FROM data_signals WHERE state='STORED'").fetchall()
        stored = {(r["generic_id"], r["record_number"], r["revision"]) for r in rows}
        pairs: dict[tuple[int, int], list[int]] = {}
        for r in rows:
            pairs.setdefault((r["generic_id"], r["record_number"]), []).append(r["revision"])
        for (gid, rec), revs in pairs.items():
            if sorted(revs) != list(range(1, len(revs) + 1)):
                problems.append(
                    f"revisions for generic {gid}, record {rec} are not gapless: {sorted(revs)}"
                )
        for r in rows:
            ds = self._ds_from_row(r)
            generic = generics.get(ds.generic_id)
            if generic is None:
                problems.append(f"data signal references missing generic {ds.generic_id}")
                continue
            if not self.record_exists(ds.record_number):
                problems.append(f"data signal references missing record {ds.record_number}")
            if generic.kind is SignalKind.FILE:
                if ds.data_file is None:
                    problems.append(
                        f"FILE signal (g{ds.generic_id} r{ds.record_number} v{ds.revision})"
                        " has no data file"
                    )
                elif ds.data_file not in files:
                    problems.append(f"data signal references missing data file {ds.data_file}")
                elif files[ds.data_file].status is not FileStatus.CLOSED:
                    problems.append(f"data signal references open data file {ds.data_file}")
            elif ds.data_file is not None:
                problems.append(
                    f"LINEAR signal (g{ds.generic_id} r{ds.record_number} v{ds.revision})"
                    " references a data file"
                )
            if len(ds.axis_revisions) != len(generic.axes):
                problems.append(
                    f"data signal (g{ds.generic_id} r{ds.record_number} v{ds.revision})"
                    f" has {len(ds.axis_revisions)} axis slots, generic has {len(generic.axes)}"
                )
            for i, axis in enumerate(ds.axis_revisions):
                if axis is None:
                    continue
                if i < len(generic.axes) and axis.generic_id != generic.axes[i]:
                    problems.append(
                        f"data signal (g{ds.generic_id} r{ds.record_number} v{ds.revision})"
                        f" axis slot {i} points at generic {axis.generic_id},"
                        f" expected {generic.axes[i]}"
                    )
                if (axis.generic_id, ds.record_number, axis.revision) not in stored:
                    problems.append(
                        f"data signal (g{ds.generic_id} r{ds.record_number} v{ds.revision})"
                        f" axis revision {axis.generic_id}:{axis.revision} is not stored"
                    )
        for m in self.channel_mappings():
            if m.generic_id not in generics:
                problems.append(f"channel mapping {m.key} references missing generic {m.generic_id}")
        return problems
