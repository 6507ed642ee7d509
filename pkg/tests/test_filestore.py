from __future__ import annotations

import hashlib
import os
import re
import stat

import numpy as np
import pytest

from pulsedb.catalog import Catalog
from pulsedb.errors import (
    AlreadyClosedError,
    DuplicateDatasetError,
    FileClosedError,
    FileOpenError,
    UnknownRecordError,
)
from pulsedb.filestore import FileStore
from pulsedb.models import FileStatus, RecordType, Tier


@pytest.fixture
def fs(tmp_path):
    cat = Catalog(tmp_path / "catalog.db")
    store = FileStore(cat, tmp_path / "data", tmp_path / "cache")
    rec = cat.create_record(RecordType.EXPERIMENT)
    return store, cat, rec


def test_new_file_layout_and_status(fs):
    store, cat, rec = fs
    handle = store.new_data_file(rec.record_number, "I_plasma")
    assert re.fullmatch(rf"{rec.record_number}/I_plasma_\d+\.cdf1", handle.ref.relative_path)
    assert handle.ref.status is FileStatus.OPEN
    assert handle.ref.tier is Tier.CACHE
    assert handle.path.exists()


def test_unknown_record(fs):
    store, _, _ = fs
    with pytest.raises(UnknownRecordError):
        store.new_data_file(999, "x")


def test_same_hint_distinct_paths(fs):
    store, _, rec = fs
    h1 = store.new_data_file(rec.record_number, "sig")
    h2 = store.new_data_file(rec.record_number, "sig")
    assert h1.ref.relative_path != h2.ref.relative_path
    assert h1.ref.id != h2.ref.id


def test_hint_sanitization(fs):
    store, _, rec = fs
    handle = store.new_data_file(rec.record_number, "weird name/../x:y")
    assert "/" not in handle.ref.relative_path.split("/", 1)[1]
    assert ":" not in handle.ref.relative_path


def test_write_close_read_cycle(fs):
    store, cat, rec = fs
    handle = store.new_data_file(rec.record_number, "sig")
    data = np.array([100.0, 200.0])
    handle.write_array("data", data)
    handle.write_array("axis0", np.array([0.0, 1.0]))
    with pytest.raises(DuplicateDatasetError):
        handle.write_array("data", data)
    ref = store.close_file(handle)
    assert ref.status is FileStatus.CLOSED
    assert ref.checksum is not None and ref.size_bytes > 0
    # closed means no write permission at the OS level
    mode = os.stat(store.resolve_path(ref)).st_mode
    assert mode & (stat.S_IWUSR | stat.S_IWGRP | stat.S_IWOTH) == 0

    with pytest.raises(FileClosedError):
        handle.write_array("more", data)
    with pytest.raises(AlreadyClosedError):
        store.close_file(handle)

    back = store.read_dataset(ref, "data")
    np.testing.assert_array_equal(back.to_array(), data)
    assert store.dataset_names(ref) == ["data", "axis0"]


def test_read_requires_closed(fs):
    store, _, rec = fs
    handle = store.new_data_file(rec.record_number, "sig")
    handle.write_array("data", np.arange(3))
    with pytest.raises(FileOpenError):
        store.read_dataset(handle.ref, "data")


def test_migrate_cache_moves_closed_files(fs):
    store, cat, rec = fs
    closed_refs = []
    for i in range(3):
        h = store.new_data_file(rec.record_number, f"sig{i}")
        h.write_array("data", np.arange(4) + i)
        closed_refs.append(store.close_file(h))
    open_handle = store.new_data_file(rec.record_number, "open")

    before = {r.id: store.read_dataset(r, "data").payload for r in closed_refs}
    hashes = {r.id: hashlib.sha256(store.resolve_path(r).read_bytes()).hexdigest() for r in closed_refs}

    assert store.migrate_cache() == 3

    for r in closed_refs:
        updated = cat.get_data_file(r.id)
        assert updated.tier is Tier.PERMANENT
        path = store.resolve_path(updated)
        assert path.is_relative_to(store.data_root)
        assert store.read_dataset(updated, "data").payload == before[r.id]
        assert hashlib.sha256(path.read_bytes()).hexdigest() == hashes[r.id]
        assert not (store.cache_root / updated.relative_path).exists()

    still_open = cat.get_data_file(open_handle.ref.id)
    assert still_open.tier is Tier.CACHE and still_open.status is FileStatus.OPEN
    assert store.migrate_cache() == 0  # nothing left


def test_migrate_empty_cache(fs):
    store, _, _ = fs
    assert store.migrate_cache() == 0


def test_resolve_path_tier_fallback(fs):
    # simulate a crash between rename and tier update
    store, cat, rec = fs
    h = store.new_data_file(rec.record_number, "sig")
    h.write_array("data", np.arange(2))
    ref = store.close_file(h)
    dst = store.data_root / ref.relative_path
    dst.parent.mkdir(parents=True, exist_ok=True)
    os.rename(store.cache_root / ref.relative_path, dst)
    # catalog still says CACHE, but the read must succeed
    assert store.read_dataset(ref, "data").to_array().tolist() == [0, 1]
    # migrate_cache finishes the interrupted move
    assert store.migrate_cache() == 1
    assert cat.get_data_file(ref.id).tier is Tier.PERMANENT


def test_empty_container_file(fs):
    store, _, rec = fs
    h = store.new_data_file(rec.record_number, "empty")
    ref = store.close_file(h)
    assert store.dataset_names(ref) == []


def test_migration_concurrent_with_readers(fs):
    import threading

    store, cat, rec = fs
    refs = []
    for i in range(12):
        h = store.new_data_file(rec.record_number, f"c{i}")
        h.write_array("data", np.full(256, float(i)))
        refs.append(store.close_file(h))

    errors = []
    stop = threading.Event()

    def reader():
        while not stop.is_set():
            for i, ref in enumerate(refs):
                try:
                    current = cat.get_data_file(ref.id)
                    arr = store.read_dataset(current, "data").to_array()
                    if not (arr == float(i)).all():
                        errors.append(f"file {ref.id}: wrong content")
                except Exception as e:
                    errors.append(f"file {ref.id}: {e!r}")

    threads = [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    try:
        moved = store.migrate_cache()
    finally:
        stop.set()
        for t in threads:
            t.join()
    assert moved == 12
    assert errors == []
