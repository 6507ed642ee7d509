"""The CDF1 container: a write-once file holding named n-dimensional arrays.

Layout, little-endian throughout:

    magic "CDF1" | u16 version=1 | u32 dataset count N
    N table entries:
        u16 name length | UTF-8 name | u8 dtype code | u8 ndim
        ndim x u64 shape | u64 payload offset (from file start)
        u64 payload length | u32 CRC32 of payload
    payload region (contiguous, in table order)

The table is finalized in one shot when the file is closed, so a readable
container is always complete.  Readers verify the per-dataset CRC on every
payload read.
"""

from __future__ import annotations

import math
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    ChecksumMismatchError,
    InvalidContainerError,
    NotFoundError,
    ShapePayloadMismatchError,
    UnsupportedDtypeError,
)

MAGIC = b"CDF1"
VERSION = 1

# dtype name -> (on-disk code, numpy dtype, element size)
DTYPES: dict[str, tuple[int, str, int]] = {
    "f32": (1, "<f4", 4),
    "f64": (2, "<f8", 8),
    "i8": (3, "i1", 1),
    "i16": (4, "<i2", 2),
    "i32": (5, "<i4", 4),
    "i64": (6, "<i8", 8),
    "u8": (7, "u1", 1),
    "u16": (8, "<u2", 2),
    "u32": (9, "<u4", 4),
    "u64": (10, "<u8", 8),
}
_CODE_TO_NAME = {code: name for name, (code, _, _) in DTYPES.items()}
_NUMPY_TO_NAME = {
    np.dtype(np_dtype): name for name, (_, np_dtype, _) in DTYPES.items()
}


def dtype_name_for(array: np.ndarray) -> str:
    """Map a numpy array's dtype to its container dtype name."""
    name = _NUMPY_TO_NAME.get(array.dtype.newbyteorder("<"))
    if name is None:
        raise UnsupportedDtypeError(f"dtype {array.dtype} has no container representation")
    return name


@dataclass(frozen=True)
class Dataset:
    """One named array: dtype name, shape and the raw little-endian payload."""

    name: str
    dtype: str
    shape: tuple[int, ...]
    payload: bytes

    def __post_init__(self) -> None:
        if self.dtype not in DTYPES:
            raise UnsupportedDtypeError(f"unknown dtype {self.dtype!r}")
        expected = DTYPES[self.dtype][2] * math.prod(self.shape)
        if len(self.payload) != expected:
            raise ShapePayloadMismatchError(
                f"dataset {self.name!r}: shape {self.shape} with dtype {self.dtype}"
                f" needs {expected} payload bytes, got {len(self.payload)}"
            )

    @classmethod
    def from_array(cls, name: str, array: np.ndarray) -> Dataset:
        # asarray with order="C" keeps 0-d shapes (ascontiguousarray would not)
        arr = np.asarray(array, order="C")
        dtype = dtype_name_for(arr)
        le = arr.astype(DTYPES[dtype][1], copy=False)
        return cls(name, dtype, tuple(int(s) for s in arr.shape), le.tobytes())

    def to_array(self) -> np.ndarray:
        arr = np.frombuffer(self.payload, dtype=DTYPES[self.dtype][1])
        return arr.reshape(self.shape)


@dataclass(frozen=True)
class _Entry:
    name: str
    dtype_code: int
    shape: tuple[int, ...]
    offset: int
    length: int
    crc: int


def _entry_bytes(name: str, dtype_code: int, shape: tuple[int, ...], offset: int,
                 length: int, crc: int) -> bytes:
    encoded = name.encode("utf-8")
    parts = [struct.pack("<H", len(encoded)), encoded, struct.pack("<BB", dtype_code, len(shape))]
    for dim in shape:
        parts.append(struct.pack("<Q", dim))
    parts.append(struct.pack("<QQI", offset, length, crc))
    return b"".join(parts)


def write_container(path, datasets: list[Dataset]) -> tuple[int, int]:
    """Write a complete container; returns (payload-region CRC32, file size)."""
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise InvalidContainerError("duplicate dataset names")
    table_size = 4 + 2 + 4
    for d in datasets:
        table_size += 2 + len(d.name.encode("utf-8")) + 1 + 1 + 8 * len(d.shape) + 8 + 8 + 4
    offset = table_size
    entries: list[bytes] = []
    for d in datasets:
        crc = zlib.crc32(d.payload) & 0xFFFFFFFF
        entries.append(_entry_bytes(d.name, DTYPES[d.dtype][0], d.shape, offset, len(d.payload), crc))
        offset += len(d.payload)
    payload_crc = 0
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(datasets)))
        for entry in entries:
            f.write(entry)
        for d in datasets:
            payload_crc = zlib.crc32(d.payload, payload_crc)
            f.write(d.payload)
        f.flush()
        os.fsync(f.fileno())
    return payload_crc & 0xFFFFFFFF, offset


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise InvalidContainerError(f"truncated container while reading {what}")
    return data


def _read_table(f) -> list[_Entry]:
    if _read_exact(f, 4, "magic") != MAGIC:
        raise InvalidContainerError("bad magic: not a CDF1 container")
    version, count = struct.unpack("<HI", _read_exact(f, 6, "header"))
    if version != VERSION:
        raise InvalidContainerError(f"unsupported container version {version}")
    file_size = os.fstat(f.fileno()).st_size
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
        try:
            name = _read_exact(f, name_len, "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise InvalidContainerError(f"undecodable dataset name: {e}") from e
        dtype_code, ndim = struct.unpack("<BB", _read_exact(f, 2, "dtype/ndim"))
        if dtype_code not in _CODE_TO_NAME:
            raise InvalidContainerError(f"unknown dtype code {dtype_code}")
        shape = tuple(
            struct.unpack("<Q", _read_exact(f, 8, "shape"))[0] for _ in range(ndim)
        )
        offset, length, crc = struct.unpack("<QQI", _read_exact(f, 20, "entry tail"))
        if offset + length > file_size:
            raise InvalidContainerError(
                f"dataset {name!r} claims bytes [{offset}, {offset + length}) beyond"
                f" the {file_size}-byte file"
            )
        entries.append(_Entry(name, dtype_code, shape, offset, length, crc))
    return entries


def list_datasets(path) -> list[str]:
    with open(path, "rb") as f:
        return [e.name for e in _read_table(f)]


def read_dataset(path, name: str) -> Dataset:
    """Read one dataset, verifying its CRC against the table entry."""
    with open(path, "rb") as f:
        entry = next((e for e in _read_table(f) if e.name == name), None)
        if entry is None:
            raise NotFoundError(f"no dataset {name!r} in {path}")
        f.seek(entry.offset)
        payload = _read_exact(f, entry.length, f"payload of {name!r}")
    if zlib.crc32(payload) & 0xFFFFFFFF != entry.crc:
        raise ChecksumMismatchError(f"dataset {name!r} in {path} failed its CRC check")
    return Dataset(entry.name, _CODE_TO_NAME[entry.dtype_code], entry.shape, payload)
