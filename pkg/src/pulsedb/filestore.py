"""Write-once container files in a two-tier cache/permanent layout.

Files are created OPEN in the cache tier at
``<cache_root>/<record>/<hint>_<id>.cdf1``.  Datasets are buffered on the
handle and the container is written in one shot at close, after which the
file loses its write permission and its catalog row turns CLOSED (with the
payload-region CRC and size).  ``migrate_cache`` later renames closed
files into the permanent tier; the relative path never changes, so reads
resolve identically before and after migration.

Each OPEN file has exactly one writer (the handle that created it); CLOSED
files may be read concurrently without limit.
"""

from __future__ import annotations

import os
import re
import stat
from pathlib import Path

import numpy as np

from .catalog import Catalog
from .container import Dataset, list_datasets, read_dataset, write_container
from .errors import (
    AlreadyClosedError,
    DuplicateDatasetError,
    FileClosedError,
    FileOpenError,
    StorageFailureError,
)
from .models import DataFileRef, FileStatus, Tier

_HINT_RE = re.compile(r"[^A-Za-z0-9._-]+")
_READONLY = stat.S_IRUSR | stat.S_IRGRP | stat.S_IROTH


def _sanitize_hint(hint: str) -> str:
    cleaned = _HINT_RE.sub("_", hint).strip("._")
    return cleaned or "data"


class WriteHandle:
    """Exclusive writer for one OPEN container file."""

    def __init__(self, store: FileStore, ref: DataFileRef, path: Path):
        self._store = store
        self.ref = ref
        self.path = path
        self.datasets: list[Dataset] = []
        self.closed = False

    def write_dataset(self, dataset: Dataset) -> None:
        if self.closed:
            raise FileClosedError(f"data file {self.ref.id} is closed")
        if any(d.name == dataset.name for d in self.datasets):
            raise DuplicateDatasetError(
                f"dataset {dataset.name!r} already written to data file {self.ref.id}"
            )
        self.datasets.append(dataset)

    def write_array(self, name: str, array: np.ndarray) -> None:
        self.write_dataset(Dataset.from_array(name, array))

    def close(self) -> DataFileRef:
        return self._store.close_file(self)


class FileStore:
    def __init__(self, catalog: Catalog, data_root: str | Path, cache_root: str | Path):
        self.catalog = catalog
        self.data_root = Path(data_root)
        self.cache_root = Path(cache_root)
        self.data_root.mkdir(parents=True, exist_ok=True)
        self.cache_root.mkdir(parents=True, exist_ok=True)

    # -- paths -------------------------------------------------------------

    def _root(self, tier: Tier) -> Path:
        return self.cache_root if tier is Tier.CACHE else self.data_root

    def resolve_path(self, ref: DataFileRef) -> Path:
        """Physical location of a file; tolerates a move that raced the
        catalog tier update by falling back to the other tier's root."""
        primary = self._root(ref.tier) / ref.relative_path
        if primary.exists():
            return primary
        other = self._root(Tier.PERMANENT if ref.tier is Tier.CACHE else Tier.CACHE)
        fallback = other / ref.relative_path
        if fallback.exists():
            return fallback
        raise StorageFailureError(f"data file {ref.id} missing at {primary}")

    # -- write path ----------------------------------------------------------

    def new_data_file(self, record_number: int, name_hint: str) -> WriteHandle:
        hint = _sanitize_hint(name_hint)
        ref = self.catalog.allocate_data_file(
            record_number, lambda fid: f"{record_number}/{hint}_{fid}.cdf1"
        )
        path = self.cache_root / ref.relative_path
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.touch()
        except OSError as e:
            raise StorageFailureError(f"cannot create {path}: {e}") from e
        return WriteHandle(self, ref, path)

    def write_dataset(self, handle: WriteHandle, dataset: Dataset) -> None:
        handle.write_dataset(dataset)

    def close_file(self, handle: WriteHandle) -> DataFileRef:
        if handle.closed:
            raise AlreadyClosedError(f"data file {handle.ref.id} was already closed")
        try:
            crc, size = write_container(handle.path, handle.datasets)
            os.chmod(handle.path, _READONLY)
        except OSError as e:
            raise StorageFailureError(f"cannot finalize {handle.path}: {e}") from e
        handle.closed = True
        ref = self.catalog.finalize_data_file(handle.ref.id, checksum=crc, size_bytes=size)
        handle.ref = ref
        return ref

    # -- read path -------------------------------------------------------------

    def _ref(self, ref_or_id: DataFileRef | int) -> DataFileRef:
        if isinstance(ref_or_id, DataFileRef):
            return self.catalog.get_data_file(ref_or_id.id)
        return self.catalog.get_data_file(int(ref_or_id))

    def _open_closed(self, ref_or_id: DataFileRef | int, reader):
        ref = self._ref(ref_or_id)
        if ref.status is not FileStatus.CLOSED:
            raise FileOpenError(f"data file {ref.id} is still open")
        try:
            return reader(self.resolve_path(ref))
        except FileNotFoundError:
            # a concurrent migration renamed the file between resolve and
            # open; the move is atomic and one-way, so one retry suffices
            return reader(self.resolve_path(self._ref(ref.id)))

    def read_dataset(self, ref_or_id: DataFileRef | int, name: str) -> Dataset:
        return self._open_closed(ref_or_id, lambda path: read_dataset(path, name))

    def dataset_names(self, ref_or_id: DataFileRef | int) -> list[str]:
        return self._open_closed(ref_or_id, list_datasets)

    # -- migration ---------------------------------------------------------------

    def migrate_cache(self) -> int:
        """Move every CLOSED cache file to the permanent tier.

        Each file's move is an atomic rename followed by its own catalog
        update, so a crash can never leave a file reachable at two tier
        paths.  OPEN files are left in place.  Returns the number moved.
        """
        moved = 0
        for ref in self.catalog.list_data_files(tier=Tier.CACHE, status=FileStatus.CLOSED):
            src = self.cache_root / ref.relative_path
            dst = self.data_root / ref.relative_path
            if not src.exists() and dst.exists():
                # move happened, tier update did not: finish the job
                self.catalog.set_data_file_tier(ref.id, Tier.PERMANENT)
                moved += 1
                continue
            try:
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.rename(src, dst)
            except OSError as e:
                raise StorageFailureError(f"cannot migrate {src} -> {dst}: {e}") from e
            self.catalog.set_data_file_tier(ref.id, Tier.PERMANENT)
            moved += 1
        return moved
