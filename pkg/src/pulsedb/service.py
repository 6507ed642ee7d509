"""JSON-over-HTTP service mapping the library API for non-Python clients.

Endpoints (identifiers appear URL-encoded as a single path segment):

    GET  /records/{n}                 record metadata (n may be relative)
    POST /records                     create a record
    GET  /generic_signals/{gs_str_id} generic-signal metadata
    POST /generic_signals             create a generic signal
    GET  /signals/{str_id}            signal metadata + inline values or data_url
    GET  /signals/{str_id}/data       raw dataset payload (X-CDB-Dtype/-Shape)
    POST /signals/{gs_str_id}:{record}  put_signal (JSON, base64 payload)
    POST /signals/{str_id}/update     update_signal
    GET  /tasks                       task manifests
    POST /tasks                       add task(s) from manifest JSON
    POST /postproc/run/{record}?parallelism=k
    GET  /postproc/stale/{record}

Values travel inline as JSON arrays only when small (<= 1024 elements);
otherwise the response carries a ``data_url`` pointing at the binary
endpoint, which returns the stored bytes untouched so clients can
reconstruct values bit-exactly.  Errors are ``{code, message}`` JSON.
"""

from __future__ import annotations

import base64
import json
import signal as _signal
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, quote, urlsplit, unquote

import numpy as np

from . import postproc
from .container import DTYPES
from .errors import (
    BindFailureError,
    ChecksumMismatchError,
    CycleDetectedError,
    DuplicateAliasError,
    DuplicateDatasetError,
    DuplicateNameError,
    DuplicateProducerError,
    DuplicateTaskNameError,
    DuplicateValidFromError,
    FileStillOpenError,
    InvalidContainerError,
    PulseDBError,
    RevisionNotAllocatedError,
    StorageFailureError,
)
from .identifier import ByAlias, ById, ByName, Schema, SignalRef, format_str_id, parse_str_id
from .models import AxisRef, LinearTime, SignalKind, time_axis_from_json
from .signals import Signal
from .store import Config, Store

INLINE_LIMIT = 1024

_CONFLICT = (
    DuplicateAliasError,
    DuplicateNameError,
    DuplicateDatasetError,
    DuplicateProducerError,
    DuplicateTaskNameError,
    DuplicateValidFromError,
    FileStillOpenError,
    RevisionNotAllocatedError,
    CycleDetectedError,
)
_SERVER_SIDE = (ChecksumMismatchError, StorageFailureError, InvalidContainerError)


def _status_for(exc: Exception) -> int:
    code = getattr(exc, "code", "")
    if isinstance(exc, _CONFLICT):
        return 409
    if isinstance(exc, _SERVER_SIDE):
        return 500
    if code in ("NotFound", "NoMapping", "UnknownGeneric", "UnknownRecord", "UnknownAxis"):
        return 404
    return 400


def _locator_for(generic) -> ByAlias | ByName | ById:
    if generic.alias:
        return ByAlias(generic.alias)
    return ByName(generic.name, generic.data_source)


def canonical_str_id(generic, ds, units_tag: str = "default") -> str:
    return format_str_id(
        SignalRef(Schema.CDB, _locator_for(generic), ds.record_number, ds.revision, units_tag)
    )


def data_url_for(str_id: str) -> str:
    return f"/signals/{quote(str_id, safe='')}/data"


def wire_signal(sig: Signal, inline_limit: int | None = INLINE_LIMIT) -> dict:
    """WireSignal JSON: metadata plus inline values/time or a data_url.

    ``inline_limit=None`` forces inline values (used by the CLI, where a
    data_url would be meaningless).
    """
    str_id = canonical_str_id(sig.generic, sig.meta, sig.units_tag)
    doc = sig.meta.to_json_dict()
    doc["str_id"] = str_id
    doc["generic"] = sig.generic.to_json_dict()
    doc["units_tag"] = sig.units_tag
    doc["shape"] = list(sig.values.shape)
    if inline_limit is None or sig.values.size <= inline_limit:
        doc["values"] = sig.values.tolist()
        if sig.time is not None:
            doc["time"] = sig.time.tolist()
    else:
        doc["data_url"] = data_url_for(str_id)
    return doc


def _decode_values(body: dict) -> np.ndarray:
    if "values_b64" in body:
        dtype = body.get("dtype", "f64")
        if dtype not in DTYPES:
            raise ValueError(f"unknown dtype {dtype!r}")
        raw = base64.b64decode(body["values_b64"])
        arr = np.frombuffer(raw, dtype=DTYPES[dtype][1])
        return arr.reshape(tuple(body.get("shape", [arr.size])))
    if "values" in body:
        return np.asarray(body["values"])
    raise ValueError("request body needs 'values' or 'values_b64'")


def _decode_time_axis(body: dict):
    if "time_axis" in body:
        return time_axis_from_json(body["time_axis"])
    if "t0" in body and "dt" in body:
        return LinearTime(float(body["t0"]), float(body["dt"]))
    return None


class _Handler(BaseHTTPRequestHandler):
    server_version = "pulsedb"
    protocol_version = "HTTP/1.1"

    # quiet by default; the CLI serve command sets verbose=True
    def log_message(self, fmt, *args):
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    @property
    def store(self) -> Store:
        return self.server.store  # type: ignore[attr-defined]

    # -- plumbing -----------------------------------------------------------

    def _segments(self) -> tuple[list[str], dict[str, list[str]]]:
        split = urlsplit(self.path)
        segments = [unquote(p) for p in split.path.split("/") if p != ""]
        return segments, parse_qs(split.query)

    def _send_json(self, status: int, doc) -> None:
        payload = json.dumps(doc, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _send_error_json(self, exc: Exception) -> None:
        code = getattr(exc, "code", None) or "BadRequest"
        self._send_json(_status_for(exc), {"code": code, "message": str(exc)})

    def _send_binary(self, payload: bytes, dtype: str, shape: tuple[int, ...]) -> None:
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("X-CDB-Dtype", dtype)
        self.send_header("X-CDB-Shape", ",".join(str(s) for s in shape))
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        self._body_consumed = True
        if length == 0:
            return {}
        doc = json.loads(self.rfile.read(length).decode("utf-8"))
        if not isinstance(doc, (dict, list)):
            raise ValueError("JSON object expected")
        return doc

    def _drain_body(self) -> None:
        # an unread request body would desync the next keep-alive request
        if getattr(self, "_body_consumed", False):
            return
        length = int(self.headers.get("Content-Length") or 0)
        if length > 0:
            self.rfile.read(length)

    def _dispatch(self, method: str) -> None:
        self._body_consumed = False
        try:
            segments, query = self._segments()
            handled = self._route(method, segments, query)
            if not handled:
                self._send_json(404, {"code": "NotFound", "message": "no such endpoint"})
        except (PulseDBError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            self._send_error_json(exc)
        finally:
            self._drain_body()

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        self._dispatch("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._dispatch("POST")

    # -- routes --------------------------------------------------------------

    def _route(self, method: str, seg: list[str], query: dict) -> bool:
        store = self.store
        if method == "GET" and len(seg) == 2 and seg[0] == "records":
            record = store.catalog.get_record(store.catalog.resolve_record_number(int(seg[1])))
            self._send_json(200, record.to_json_dict())
            return True
        if method == "POST" and seg == ["records"]:
            body = self._read_body()
            record = store.create_record(body["record_type"], body.get("description", ""))
            self._send_json(201, record.to_json_dict())
            return True
        if method == "GET" and len(seg) == 2 and seg[0] == "generic_signals":
            generic = store.resolve_generic(seg[1])
            self._send_json(200, generic.to_json_dict())
            return True
        if method == "POST" and seg == ["generic_signals"]:
            body = self._read_body()
            generic = store.create_generic_signal(
                body["name"],
                body["data_source"],
                alias=body.get("alias"),
                kind=body.get("kind", "FILE"),
                units=body.get("units", ""),
                description=body.get("description", ""),
                axes=body.get("axes", ()),
            )
            self._send_json(201, generic.to_json_dict())
            return True
        if method == "GET" and len(seg) == 2 and seg[0] == "signals":
            self._get_signal_meta(seg[1], query)
            return True
        if method == "GET" and len(seg) == 3 and seg[0] == "signals" and seg[2] == "data":
            self._get_signal_data(seg[1], query)
            return True
        if method == "POST" and len(seg) == 2 and seg[0] == "signals" and ":" in seg[1]:
            self._put_signal(seg[1])
            return True
        if method == "POST" and len(seg) == 3 and seg[0] == "signals" and seg[2] == "update":
            self._update_signal(seg[1])
            return True
        if method == "GET" and seg == ["tasks"]:
            specs = store.catalog.list_tasks()
            self._send_json(200, [postproc.task_to_manifest(store.catalog, t) for t in specs])
            return True
        if method == "POST" and seg == ["tasks"]:
            body = self._read_body()
            items = body if isinstance(body, list) else [body]
            added = []
            for item in items:
                spec = postproc.spec_from_manifest(store.catalog, item)
                postproc.add_task(store.catalog, spec)
                added.append(spec.name)
            self._send_json(201, {"added": added})
            return True
        if method == "POST" and len(seg) == 3 and seg[:2] == ["postproc", "run"]:
            parallelism = int(query.get("parallelism", ["1"])[0])
            graph = postproc.load_graph(store.catalog)
            logs = postproc.run(store, graph, int(seg[2]), parallelism=parallelism)
            self._send_json(200, [log.to_json_dict() for log in logs])
            return True
        if method == "GET" and len(seg) == 3 and seg[:2] == ["postproc", "stale"]:
            graph = postproc.load_graph(store.catalog)
            stale = postproc.check_freshness(store, graph, int(seg[2]))
            self._send_json(200, {"stale": sorted(stale)})
            return True
        return False

    def _get_signal_meta(self, str_id: str, query: dict) -> None:
        store = self.store
        ref = parse_str_id(str_id)
        ds = store.catalog.find_data_signal(ref)
        generic = store.catalog.get_generic(ds.generic_id)
        length = int(query["length"][0]) if "length" in query else None
        if generic.kind is SignalKind.LINEAR and length is None:
            doc = ds.to_json_dict()
            canonical = canonical_str_id(generic, ds, ref.units_tag)
            doc["str_id"] = canonical
            doc["generic"] = generic.to_json_dict()
            doc["units_tag"] = ref.units_tag
            doc["data_url"] = data_url_for(canonical)
            self._send_json(200, doc)
            return
        sig = store.get_signal(ref, length=length)
        self._send_json(200, wire_signal(sig))

    def _get_signal_data(self, str_id: str, query: dict) -> None:
        store = self.store
        ref = parse_str_id(str_id)
        ds = store.catalog.find_data_signal(ref)
        generic = store.catalog.get_generic(ds.generic_id)
        if generic.kind is SignalKind.FILE:
            dataset = store.files.read_dataset(ds.data_file, ds.dataset_name)
            self._send_binary(dataset.payload, dataset.dtype, dataset.shape)
            return
        if "length" not in query:
            raise ValueError("LINEAR signal data requires a ?length= parameter")
        length = int(query["length"][0])
        raw = np.arange(length).astype("<i8")
        self._send_binary(raw.tobytes(), "i64", (length,))

    def _put_signal(self, segment: str) -> None:
        store = self.store
        gs_str_id, record_text = segment.rsplit(":", 1)
        body = self._read_body()
        values = _decode_values(body)
        ds = store.put_signal(
            gs_str_id,
            int(record_text),
            values,
            time_axis=_decode_time_axis(body),
            offset=float(body.get("offset", 0.0)),
            coefficient=float(body.get("coefficient", 1.0)),
            note=body.get("note", ""),
        )
        generic = store.catalog.get_generic(ds.generic_id)
        doc = ds.to_json_dict()
        doc["str_id"] = canonical_str_id(generic, ds)
        self._send_json(201, doc)

    def _update_signal(self, str_id: str) -> None:
        store = self.store
        body = self._read_body()
        kwargs = {}
        if "offset" in body:
            kwargs["offset"] = float(body["offset"])
        if "coefficient" in body:
            kwargs["coefficient"] = float(body["coefficient"])
        time_axis = _decode_time_axis(body)
        if time_axis is not None or "time_axis" in body:
            kwargs["time_axis"] = time_axis
        if "axis_revisions" in body:
            kwargs["axis_revisions"] = tuple(
                None if a is None else AxisRef(int(a[0]), int(a[1]))
                for a in body["axis_revisions"]
            )
        ds = store.update_signal(str_id, **kwargs)
        generic = store.catalog.get_generic(ds.generic_id)
        doc = ds.to_json_dict()
        doc["str_id"] = canonical_str_id(generic, ds)
        self._send_json(201, doc)


class Service:
    """Embeddable HTTP service over one store."""

    def __init__(self, store: Store, listen_addr: str | None = None, verbose: bool = False):
        self.store = store
        addr = listen_addr or store.config.listen_addr
        host, _, port_text = addr.rpartition(":")
        try:
            self._server = ThreadingHTTPServer((host or "127.0.0.1", int(port_text)), _Handler)
        except OSError as e:
            raise BindFailureError(f"cannot bind {addr}: {e}") from e
        self._server.store = store  # type: ignore[attr-defined]
        self._server.verbose = verbose  # type: ignore[attr-defined]
        self._server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "Service":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=10)
        self._server.server_close()

    def serve_forever(self) -> None:
        self._server.serve_forever()


def serve(config: Config, verbose: bool = True) -> None:
    """Run the service until SIGINT/SIGTERM (the CLI entry point)."""
    store = Store(config)
    service = Service(store, verbose=verbose)

    def _shutdown(signum, frame):
        threading.Thread(target=service.stop, daemon=True).start()

    _signal.signal(_signal.SIGINT, _shutdown)
    _signal.signal(_signal.SIGTERM, _shutdown)
    service.serve_forever()
