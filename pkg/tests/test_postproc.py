from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsedb.catalog import Catalog
from pulsedb.errors import (
    CycleDetectedError,
    DuplicateProducerError,
    DuplicateTaskNameError,
)
from pulsedb.models import RunStatus, TaskSpec
from pulsedb.postproc import (
    TaskGraph,
    add_task,
    check_freshness,
    load_graph,
    load_manifest,
    plan,
    run,
)

from helpers import (
    brute_force_downstream,
    brute_force_valid,
    brute_force_wave,
    failing_command,
    storing_command,
    write_store_config,
)


def _spec(name, inputs, outputs, command=("true",), timeout=30.0):
    return TaskSpec(name, frozenset(inputs), frozenset(outputs), tuple(command), timeout)


@pytest.fixture
def cat(tmp_path):
    return Catalog(tmp_path / "catalog.db")


def test_add_task_chain_then_cycle(cat):
    add_task(cat, _spec("A", {1}, {2}))
    add_task(cat, _spec("B", {2}, {3}))
    with pytest.raises(CycleDetectedError) as exc:
        add_task(cat, _spec("C", {3}, {1}))
    assert set(exc.value.cycle) == {"A", "B", "C"}
    # rejected task is not persisted
    assert set(load_graph(cat).tasks) == {"A", "B"}


def test_duplicate_producer(cat):
    add_task(cat, _spec("A", {1}, {2}))
    with pytest.raises(DuplicateProducerError) as exc:
        add_task(cat, _spec("D", {1}, {2}))
    assert exc.value.existing_task == "A"
    assert exc.value.signal_id == 2


def test_duplicate_name_and_self_loop(cat):
    add_task(cat, _spec("A", {1}, {2}))
    with pytest.raises(DuplicateTaskNameError):
        add_task(cat, _spec("A", {8}, {9}))
    with pytest.raises(CycleDetectedError) as exc:
        add_task(cat, _spec("S", {5}, {5}))
    assert exc.value.cycle == ["S"]
    with pytest.raises(ValueError):
        add_task(cat, _spec("E", {1}, set()))


def test_plan_layers(cat):
    g = add_task(cat, _spec("A", {1}, {2}))
    g = add_task(cat, _spec("B", {2}, {3}))
    assert plan(g) == [{"A"}, {"B"}]

    cat2 = Catalog(cat.path.parent / "c2.db")
    g2 = add_task(cat2, _spec("A", {1}, {2}))
    g2 = add_task(cat2, _spec("B", {1}, {3}))
    g2 = add_task(cat2, _spec("C", {2, 3}, {4}))
    waves = plan(g2)
    assert waves == [{"A", "B"}, {"C"}]
    # brute-force longest-path oracle agrees wave by wave
    for k, wave in enumerate(waves):
        for name in wave:
            assert brute_force_wave(g2.tasks, name) == k

    assert plan(TaskGraph({})) == []


def test_plan_is_insertion_order_independent(tmp_path):
    specs = [
        _spec("A", {1}, {2}),
        _spec("B", {1}, {3}),
        _spec("C", {2, 3}, {4}),
        _spec("D", {4}, {5}),
    ]
    waves = None
    for i, order in enumerate([specs, specs[::-1], [specs[2], specs[0], specs[3], specs[1]]]):
        c = Catalog(tmp_path / f"cat{i}.db")
        g = None
        for s in order:
            g = add_task(c, s)
        if waves is None:
            waves = plan(g)
        else:
            assert plan(g) == waves


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_add_task_matches_brute_force(tmp_path_factory, data):
    n_tasks = data.draw(st.integers(1, 8))
    specs = []
    for i in range(n_tasks):
        inputs = data.draw(st.frozensets(st.integers(1, 6), max_size=3))
        outputs = data.draw(st.frozensets(st.integers(1, 6), min_size=1, max_size=3))
        specs.append(TaskSpec(f"t{i}", inputs, outputs, ("true",), 5.0))
    cat = Catalog(tmp_path_factory.mktemp("g") / "cat.db")
    accepted: dict[str, TaskSpec] = {}
    for spec in specs:
        candidate = dict(accepted)
        candidate[spec.name] = spec
        should_accept = brute_force_valid(candidate)
        try:
            add_task(cat, spec)
            did_accept = True
        except (CycleDetectedError, DuplicateProducerError):
            did_accept = False
        assert did_accept == should_accept, f"{spec} on {sorted(accepted)}"
        if did_accept:
            accepted[spec.name] = spec
    assert set(load_graph(cat).tasks) == set(accepted)


@pytest.fixture
def pipeline(store, tmp_path):
    """Signals s1..s4 by alias; s1 pre-stored; env for task subprocesses."""
    record = store.create_record("EXPERIMENT")
    gids = {}
    for name in ("s1", "s2", "s3", "s4"):
        gids[name] = store.create_generic_signal(name, "pp", alias=name).id
    store.put_signal("s1", record.record_number, np.array([1.0, 2.0, 3.0, 4.0]))
    env = write_store_config(tmp_path, store)
    return store, record, gids, env


def test_run_chain_orders_and_stores(pipeline):
    store, record, gids, env = pipeline
    g = add_task(store.catalog, _spec("A", {gids["s1"]}, {gids["s2"]}, storing_command(0, "s2")))
    g = add_task(store.catalog, _spec("B", {gids["s2"]}, {gids["s3"]}, storing_command(0, "s3")))
    logs = {l.task_name: l for l in run(store, g, record.record_number, parallelism=2, extra_env=env)}
    assert logs["A"].status is RunStatus.OK and logs["B"].status is RunStatus.OK
    assert logs["A"].ended <= logs["B"].started
    assert logs["B"].input_revisions == {gids["s2"]: 1}
    assert logs["B"].output_revisions == {gids["s3"]: 1}
    assert store.get_signal(f"s3:{record.record_number}:-1").values.shape == (4,)


def test_run_failure_cascades(pipeline):
    store, record, gids, env = pipeline
    g = add_task(store.catalog, _spec("A", {gids["s1"]}, {gids["s2"]}, failing_command()))
    g = add_task(store.catalog, _spec("B", {gids["s2"]}, {gids["s3"]}, storing_command(0, "s3")))
    logs = {l.task_name: l for l in run(store, g, record.record_number, extra_env=env)}
    assert logs["A"].status is RunStatus.FAILED
    assert logs["B"].status is RunStatus.FAILED
    assert "MissingInput" in logs["B"].detail
    # B never executed: s3 still has no revision
    assert store.catalog.latest_revision(gids["s3"], record.record_number) is None


def test_run_missing_source_input(pipeline):
    store, record, gids, env = pipeline
    g = add_task(store.catalog, _spec("X", {gids["s4"]}, {gids["s2"]}, storing_command(0, "s2")))
    logs = run(store, g, record.record_number, extra_env=env)
    assert logs[0].status is RunStatus.FAILED
    assert "MissingInput" in logs[0].detail


def test_run_parallelism_one_never_overlaps(pipeline):
    store, record, gids, env = pipeline
    g = add_task(store.catalog, _spec("A", {gids["s1"]}, {gids["s2"]}, storing_command(0.2, "s2")))
    g = add_task(store.catalog, _spec("B", {gids["s1"]}, {gids["s3"]}, storing_command(0.2, "s3")))
    logs = run(store, g, record.record_number, parallelism=1, extra_env=env)
    (first, second) = sorted(logs, key=lambda l: l.started)
    assert first.ended <= second.started


def test_second_run_is_all_skipped_fresh(pipeline):
    store, record, gids, env = pipeline
    g = add_task(store.catalog, _spec("A", {gids["s1"]}, {gids["s2"]}, storing_command(0, "s2")))
    g = add_task(store.catalog, _spec("B", {gids["s2"]}, {gids["s3"]}, storing_command(0, "s3")))
    first = run(store, g, record.record_number, extra_env=env)
    assert all(l.status is RunStatus.OK for l in first)
    second = run(store, g, record.record_number, extra_env=env)
    assert all(l.status is RunStatus.SKIPPED_FRESH for l in second)
    # log trail is append-only: four rows now
    assert len(store.catalog.run_logs(record.record_number)) == 4


def test_freshness_downstream_closure(pipeline):
    store, record, gids, env = pipeline
    g = add_task(store.catalog, _spec("A", {gids["s1"]}, {gids["s2"]}, storing_command(0, "s2")))
    g = add_task(store.catalog, _spec("B", {gids["s2"]}, {gids["s3"]}, storing_command(0, "s3")))
    g = add_task(store.catalog, _spec("C", {gids["s3"]}, {gids["s4"]}, storing_command(0, "s4")))
    assert check_freshness(store, g, record.record_number) == {"A", "B", "C"}  # never run
    run(store, g, record.record_number, extra_env=env)
    assert check_freshness(store, g, record.record_number) == set()
    # new revision of the source signal: everything downstream is stale
    store.put_signal("s1", record.record_number, np.array([9.0, 9.0, 9.0, 9.0]))
    stale = check_freshness(store, g, record.record_number)
    assert stale == brute_force_downstream(g.tasks, {gids["s1"]})
    assert stale == {"A", "B", "C"}
    # re-run executes everything again (staleness propagates through new revisions)
    logs = {l.task_name: l.status for l in run(store, g, record.record_number, extra_env=env)}
    assert logs == {"A": RunStatus.OK, "B": RunStatus.OK, "C": RunStatus.OK}


def test_record_argument_substitution(pipeline):
    store, record, gids, env = pipeline
    check = (
        sys.executable,
        "-c",
        "import os, sys; sys.exit(0 if sys.argv[1] == os.environ['CDB_RECORD'] else 3)",
        "{record}",
    )
    g = add_task(store.catalog, _spec("sub", {gids["s1"]}, {gids["s2"]}, check))
    logs = run(store, g, record.record_number, extra_env=env)
    assert logs[0].status is RunStatus.OK


def test_timeout(pipeline):
    store, record, gids, env = pipeline
    slow = (sys.executable, "-c", "import time; time.sleep(30)")
    g = add_task(store.catalog, _spec("slow", {gids["s1"]}, {gids["s2"]}, slow, timeout=0.5))
    logs = run(store, g, record.record_number, extra_env=env)
    assert logs[0].status is RunStatus.TIMEOUT


def test_manifest_round_trip(pipeline, tmp_path):
    store, record, gids, env = pipeline
    manifest = tmp_path / "task.json"
    manifest.write_text(
        '{"name": "m", "inputs": ["s1"], "outputs": ["s2"],'
        ' "command": ["true"], "timeout_s": 5}'
    )
    (spec,) = load_manifest(store.catalog, manifest)
    assert spec.inputs == frozenset({gids["s1"]})
    assert spec.outputs == frozenset({gids["s2"]})
    assert spec.command == ("true",)
    add_task(store.catalog, spec)
    assert "m" in load_graph(store.catalog).tasks
