from __future__ import annotations

import base64
from urllib.parse import quote

import numpy as np
import pytest
import requests

from pulsedb.container import DTYPES
from pulsedb.models import LinearTime, SignalKind
from pulsedb.service import Service
from pulsedb.signals import apply_transform

from helpers import storing_command, write_store_config


@pytest.fixture
def service(store):
    svc = Service(store, listen_addr="127.0.0.1:0").start()
    yield svc
    svc.stop()


def _fetch_values(url: str, str_id: str, length: int | None = None):
    """Decode a signal over HTTP the way an external client would."""
    quoted = quote(str_id, safe="")
    params = {"length": length} if length is not None else None
    meta = requests.get(f"{url}/signals/{quoted}", params=params)
    meta.raise_for_status()
    doc = meta.json()
    if "values" in doc:
        return doc, np.asarray(doc["values"])
    resp = requests.get(url + doc["data_url"], params=params)
    resp.raise_for_status()
    dtype = resp.headers["X-CDB-Dtype"]
    shape = tuple(int(s) for s in resp.headers["X-CDB-Shape"].split(",") if s != "")
    raw = np.frombuffer(resp.content, dtype=DTYPES[dtype][1]).reshape(shape)
    if doc["units_tag"] == "raw":
        return doc, raw
    return doc, apply_transform(raw, doc["coefficient"], doc["offset"])


def test_get_signal_metadata(service, store, record, generic):
    store.put_signal(generic.id, record.record_number, np.array([1.0, 2.0]),
                     offset=3.0, coefficient=2.0, time_axis=LinearTime(0.0, 0.5))
    doc, values = _fetch_values(service.url, "I_plasma:-1:-1")
    assert doc["str_id"] == f"I_plasma:{record.record_number}:1"
    assert doc["generic"]["alias"] == "I_plasma"
    assert doc["units_tag"] == "default"
    assert doc["shape"] == [2]
    np.testing.assert_array_equal(values, [5.0, 7.0])
    assert doc["time"] == [0.0, 0.5]


def test_unknown_signal_is_json_404(service, record):
    resp = requests.get(f"{service.url}/signals/{quote('nope:1:1', safe='')}")
    assert resp.status_code == 404
    assert resp.json()["code"] == "NotFound"


def test_bad_identifier_is_400(service):
    resp = requests.get(f"{service.url}/signals/{quote('a:1:2:3', safe='')}")
    assert resp.status_code == 400
    assert resp.json()["code"] == "SyntaxError"


def test_records_endpoints(service, store):
    resp = requests.post(f"{service.url}/records", json={"record_type": "VOID"})
    assert resp.status_code == 201
    number = resp.json()["record_number"]
    assert number >= 1
    got = requests.get(f"{service.url}/records/{number}")
    assert got.status_code == 200
    assert got.json()["record_type"] == "VOID"
    assert requests.get(f"{service.url}/records/-1").json()["record_number"] == number


def test_generic_signal_endpoints(service, store):
    resp = requests.post(
        f"{service.url}/generic_signals",
        json={"name": "T_e", "data_source": "thomson", "alias": "T_e", "units": "eV"},
    )
    assert resp.status_code == 201
    gid = resp.json()["id"]
    got = requests.get(f"{service.url}/generic_signals/T_e")
    assert got.json()["id"] == gid
    dup = requests.post(
        f"{service.url}/generic_signals",
        json={"name": "other", "data_source": "x", "alias": "T_e"},
    )
    assert dup.status_code == 409
    assert dup.json()["code"] == "DuplicateAlias"


def test_daq_identifier_url_encoded(service, store, record, generic):
    from pulsedb.identifier import ChannelKey

    store.set_channel_mapping(ChannelKey("ATCA_1", "9", "13"), generic.id)
    store.put_signal(generic.id, record.record_number, np.array([4.0, 5.0]))
    doc, values = _fetch_values(service.url, "DAQ:ATCA_1/9/13:-1")
    np.testing.assert_array_equal(values, [4.0, 5.0])


def test_put_signal_roundtrip_and_revisions(service, store, record, generic):
    values = np.array([1.5, 2.5, 3.5])
    payload = {
        "values_b64": base64.b64encode(values.astype("<f8").tobytes()).decode(),
        "dtype": "f64",
        "shape": [3],
        "t0": 0.0,
        "dt": 1e-3,
    }
    url = f"{service.url}/signals/{quote(f'I_plasma:{record.record_number}', safe='')}"
    resp = requests.post(url, json=payload)
    assert resp.status_code == 201
    assert resp.json()["revision"] == 1
    resp2 = requests.post(url, json=payload)
    assert resp2.json()["revision"] == 2

    sig = store.get_signal(f"I_plasma:{record.record_number}:1")
    np.testing.assert_array_equal(sig.values, values)

    missing = requests.post(
        f"{service.url}/signals/{quote('ghost:1', safe='')}", json=payload
    )
    assert missing.status_code == 404


def test_update_signal_endpoint(service, store, record, generic):
    store.put_signal(generic.id, record.record_number, np.array([2.0, 4.0]))
    resp = requests.post(
        f"{service.url}/signals/{quote('I_plasma:-1:-1', safe='')}/update",
        json={"coefficient": 2.0},
    )
    assert resp.status_code == 201
    assert resp.json()["revision"] == 2
    np.testing.assert_array_equal(
        store.get_signal("I_plasma:-1:-1").values, [4.0, 8.0]
    )


def test_update_axis_revisions_endpoint(service, store, record):
    ax = store.create_generic_signal("x_ax", "geom", alias="x_ax")
    g = store.create_generic_signal("prof", "sim", alias="prof", axes=[ax.id])
    store.put_signal("x_ax", record.record_number, np.array([0.0, 1.0]))
    store.put_signal("prof", record.record_number, np.array([5.0, 6.0]))
    store.put_signal("x_ax", record.record_number, np.array([0.0, 2.0]))  # rev 2
    resp = requests.post(
        f"{service.url}/signals/{quote('prof:-1:-1', safe='')}/update",
        json={"axis_revisions": [[ax.id, 2]]},
    )
    assert resp.status_code == 201, resp.text
    sig = store.get_signal("prof:-1:-1")
    np.testing.assert_array_equal(sig.axes[0].values, [0.0, 2.0])


def test_linear_signal_over_http(service, store, record):
    lin = store.create_generic_signal("t_lin", "daq", alias="t_lin", kind=SignalKind.LINEAR)
    store.store_signal(lin.id, record.record_number, offset=0.0, coefficient=2.0)
    meta = requests.get(f"{service.url}/signals/{quote('t_lin:-1:-1', safe='')}").json()
    assert "values" not in meta and "data_url" in meta
    doc, values = _fetch_values(service.url, "t_lin:-1:-1", length=4)
    np.testing.assert_array_equal(values, [0.0, 2.0, 4.0, 6.0])


def test_api_library_equivalence_binary_path(service, store, record, generic):
    rng = np.random.default_rng(7)
    big = rng.standard_normal(5000)  # > inline limit, forces the binary endpoint
    store.put_signal(generic.id, record.record_number, big, offset=0.25, coefficient=1e-3)
    for str_id in ("I_plasma:-1:-1", "I_plasma:-1:-1[raw]"):
        lib = store.get_signal(str_id)
        doc, values = _fetch_values(service.url, str_id)
        assert values.tobytes() == lib.values.tobytes()
        assert "data_url" in doc


def test_api_library_equivalence_inline_path(service, store, record, generic):
    store.put_signal(
        generic.id, record.record_number,
        np.array([10, 20, 30], dtype=np.int16), offset=1.0, coefficient=0.5,
    )
    lib = store.get_signal("I_plasma:-1:-1")
    doc, values = _fetch_values(service.url, "I_plasma:-1:-1")
    assert values.astype("<f8").tobytes() == lib.values.tobytes()


def test_task_and_postproc_endpoints(service, store, record, tmp_path):
    env = write_store_config(tmp_path, store)
    import os

    os.environ.update(env)  # run() passes the environment through to tasks
    try:
        for name in ("in1", "out1"):
            store.create_generic_signal(name, "pp", alias=name)
        store.put_signal("in1", record.record_number, np.array([1.0]))
        manifest = {
            "name": "copy",
            "inputs": ["in1"],
            "outputs": ["out1"],
            "command": list(storing_command(0, "out1")),
            "timeout_s": 30,
        }
        resp = requests.post(f"{service.url}/tasks", json=manifest)
        assert resp.status_code == 201 and resp.json()["added"] == ["copy"]
        listed = requests.get(f"{service.url}/tasks").json()
        assert listed[0]["name"] == "copy"
        assert listed[0]["inputs"] == ["in1"]

        stale = requests.get(f"{service.url}/postproc/stale/{record.record_number}").json()
        assert stale["stale"] == ["copy"]
        logs = requests.post(
            f"{service.url}/postproc/run/{record.record_number}?parallelism=2"
        ).json()
        assert [l["status"] for l in logs] == ["OK"]
        stale2 = requests.get(f"{service.url}/postproc/stale/{record.record_number}").json()
        assert stale2["stale"] == []

        dup = requests.post(f"{service.url}/tasks", json=manifest)
        assert dup.status_code == 409
    finally:
        os.environ.pop("CDB_CONFIG", None)


def test_keepalive_survives_unconsumed_bodies(service, store):
    # a POST body the handler never reads must not desync the connection
    session = requests.Session()
    r1 = session.post(f"{service.url}/no/such/endpoint", json={"pad": "x" * 4096})
    assert r1.status_code == 404
    r2 = session.get(f"{service.url}/tasks", timeout=5)
    assert r2.status_code == 200 and r2.json() == []


def test_concurrent_requests(service, store, record, generic):
    from concurrent.futures import ThreadPoolExecutor

    store.put_signal(generic.id, record.record_number, np.arange(10, dtype=np.float64))

    def fetch(_):
        return _fetch_values(service.url, "I_plasma:-1:-1")[1].sum()

    with ThreadPoolExecutor(max_workers=8) as pool:
        sums = list(pool.map(fetch, range(32)))
    assert sums == [45.0] * 32
