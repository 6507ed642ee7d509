from __future__ import annotations

import pytest

from pulsedb.models import RecordType, SignalKind
from pulsedb.store import Config, Store


@pytest.fixture
def store(tmp_path):
    s = Store(Config.at(tmp_path / "store"))
    yield s
    s.close()


@pytest.fixture
def record(store):
    return store.create_record(RecordType.EXPERIMENT, "shot")


@pytest.fixture
def generic(store):
    return store.create_generic_signal(
        "I_plasma", "magnetics", alias="I_plasma", kind=SignalKind.FILE, units="A"
    )
