"""Thin HTTP client for a pulsedb signal service.

Talks only to the JSON/HTTP endpoints; it never links the server library
or touches its files.  Values are always fetched through the binary data
endpoint and are therefore bit-identical to the stored payload; the
physical-units transform ``raw * coefficient + offset`` is applied
client-side from the signal's metadata, matching the server's own
expression.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass
from typing import Any
from urllib.parse import quote

import numpy as np
import requests

__all__ = [
    "ClientError",
    "ClientSignal",
    "client_get_signal",
    "client_put_signal",
    "create_record",
    "create_generic_signal",
    "WIRE_DTYPES",
]

# Wire contract: dtype names and their little-endian numpy representations.
WIRE_DTYPES: dict[str, str] = {
    "f32": "<f4",
    "f64": "<f8",
    "i8": "i1",
    "i16": "<i2",
    "i32": "<i4",
    "i64": "<i8",
    "u8": "u1",
    "u16": "<u2",
    "u32": "<u4",
    "u64": "<u8",
}
_NUMPY_TO_WIRE = {np.dtype(v): k for k, v in WIRE_DTYPES.items()}


class ClientError(Exception):
    """HTTP-level failure carrying the service's error code."""

    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        super().__init__(f"{code} (HTTP {status}): {message}")


@dataclass
class ClientSignal:
    metadata: dict[str, Any]
    values: np.ndarray
    time: np.ndarray | None = None

    @property
    def str_id(self) -> str:
        return self.metadata["str_id"]

    @property
    def units_tag(self) -> str:
        return self.metadata.get("units_tag", "default")


def _check(resp: requests.Response) -> requests.Response:
    if resp.status_code >= 400:
        try:
            doc = resp.json()
            raise ClientError(resp.status_code, doc.get("code", "Error"), doc.get("message", ""))
        except ValueError:
            raise ClientError(resp.status_code, "Error", resp.text[:200]) from None
    return resp


def _quote_id(str_id: str) -> str:
    return quote(str_id, safe="")


def _fetch_payload(base_url: str, str_id: str, length: int | None) -> np.ndarray:
    params = {"length": length} if length is not None else None
    resp = _check(
        requests.get(f"{base_url}/signals/{_quote_id(str_id)}/data", params=params)
    )
    dtype = resp.headers["X-CDB-Dtype"]
    shape = tuple(int(s) for s in resp.headers["X-CDB-Shape"].split(",") if s != "")
    return np.frombuffer(resp.content, dtype=WIRE_DTYPES[dtype]).reshape(shape)


def client_get_signal(base_url: str, str_id: str, length: int | None = None) -> ClientSignal:
    """Fetch one signal: metadata via the JSON endpoint, numbers via the
    binary endpoint (bit-identical to the stored payload)."""
    params = {"length": length} if length is not None else None
    meta = _check(
        requests.get(f"{base_url}/signals/{_quote_id(str_id)}", params=params)
    ).json()

    raw = _fetch_payload(base_url, meta["str_id"], length)
    if meta.get("units_tag", "default") == "raw":
        values = raw
    else:
        values = raw * meta["coefficient"] + meta["offset"]

    time = None
    axis = meta.get("time_axis")
    if axis is not None and values.ndim >= 1:
        if axis["kind"] == "linear":
            time = np.arange(values.shape[0]) * axis["dt"] + axis["t0"]
        else:
            axis_id = f"{axis['generic_id']}:{meta['record_number']}:{axis['revision']}"
            time = client_get_signal(base_url, axis_id, length=values.shape[0]).values
    return ClientSignal(meta, values, time)


def client_put_signal(
    base_url: str,
    gs_str_id: str,
    record_number: int,
    values,
    t0: float | None = None,
    dt: float | None = None,
    offset: float = 0.0,
    coefficient: float = 1.0,
) -> str:
    """Store a new revision; returns the canonical str_id of the stored signal."""
    arr = np.asarray(values)
    wire = _NUMPY_TO_WIRE.get(arr.dtype.newbyteorder("<"))
    if wire is None:
        raise ValueError(f"dtype {arr.dtype} has no wire representation")
    body: dict[str, Any] = {
        "values_b64": base64.b64encode(
            np.asarray(arr, order="C").astype(WIRE_DTYPES[wire], copy=False).tobytes()
        ).decode("ascii"),
        "dtype": wire,
        "shape": list(arr.shape),
        "offset": offset,
        "coefficient": coefficient,
    }
    if t0 is not None and dt is not None:
        body["t0"] = t0
        body["dt"] = dt
    segment = _quote_id(f"{gs_str_id}:{record_number}")
    doc = _check(requests.post(f"{base_url}/signals/{segment}", json=body)).json()
    return doc["str_id"]


def create_record(base_url: str, record_type: str = "EXPERIMENT", description: str = "") -> int:
    doc = _check(
        requests.post(
            f"{base_url}/records",
            json={"record_type": record_type, "description": description},
        )
    ).json()
    return doc["record_number"]


def create_generic_signal(
    base_url: str,
    name: str,
    data_source: str,
    alias: str | None = None,
    kind: str = "FILE",
    units: str = "",
) -> dict[str, Any]:
    return _check(
        requests.post(
            f"{base_url}/generic_signals",
            json={
                "name": name,
                "data_source": data_source,
                "alias": alias,
                "kind": kind,
                "units": units,
            },
        )
    ).json()
