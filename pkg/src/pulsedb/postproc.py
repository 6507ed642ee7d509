"""Dependency-driven post-processing: task registry, DAG validation,
parallel per-record execution, run logs and freshness checks.

Tasks declare input and output signal sets; an edge runs from a producer
task to every task consuming one of its outputs.  The graph must stay
acyclic and every signal may have at most one producer; both conditions
are re-checked inside one catalog transaction whenever a task is added.

A run executes each task's external command (argument template ``{record}``
and environment variable ``CDB_RECORD``) once all its producing
predecessors finished successfully and all inputs have at least one stored
revision.  Tasks whose latest input revisions match their most recent OK
log are skipped as fresh; tasks downstream of a failure are failed with a
MissingInput reason instead of waiting forever.
"""

from __future__ import annotations

import json
import os
import subprocess
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .catalog import Catalog
from .errors import CycleDetectedError, DuplicateProducerError, DuplicateTaskNameError
from .identifier import parse_gs_str_id
from .models import RunStatus, TaskRunLog, TaskSpec

if TYPE_CHECKING:
    from .store import Store


@dataclass(frozen=True)
class TaskGraph:
    tasks: dict[str, TaskSpec]

    @property
    def producers(self) -> dict[int, str]:
        return {out: t.name for t in self.tasks.values() for out in t.outputs}

    def predecessors(self, name: str) -> set[str]:
        producers = self.producers
        return {
            producers[g]
            for g in self.tasks[name].inputs
            if g in producers and producers[g] != name
        }

    def successors(self, name: str) -> set[str]:
        outputs = self.tasks[name].outputs
        return {
            t.name for t in self.tasks.values() if t.name != name and t.inputs & outputs
        }

    def downstream_of_signals(self, signal_ids: Iterable[int]) -> set[str]:
        """All tasks that consume the given signals, directly or transitively."""
        signal_ids = set(signal_ids)
        hit = {t.name for t in self.tasks.values() if t.inputs & signal_ids}
        frontier = set(hit)
        while frontier:
            nxt = set()
            for name in frontier:
                for succ in self.successors(name):
                    if succ not in hit:
                        hit.add(succ)
                        nxt.add(succ)
            frontier = nxt
        return hit


def _find_cycle(tasks: dict[str, TaskSpec]) -> list[str] | None:
    graph = TaskGraph(tasks)
    color: dict[str, int] = {}  # 0 unvisited, 1 on stack, 2 done
    stack: list[str] = []

    def visit(name: str) -> list[str] | None:
        color[name] = 1
        stack.append(name)
        for succ in sorted(graph.successors(name)):
            c = color.get(succ, 0)
            if c == 1:
                return stack[stack.index(succ):]
            if c == 0:
                cycle = visit(succ)
                if cycle is not None:
                    return cycle
        stack.pop()
        color[name] = 2
        return None

    for name in sorted(tasks):
        if color.get(name, 0) == 0:
            cycle = visit(name)
            if cycle is not None:
                return cycle
    return None


def load_graph(catalog: Catalog) -> TaskGraph:
    return TaskGraph({t.name: t for t in catalog.list_tasks()})


def add_task(catalog: Catalog, spec: TaskSpec) -> TaskGraph:
    """Persist a task after validating the resulting graph.

    Raises :class:`DuplicateTaskNameError`, :class:`DuplicateProducerError`
    (naming the conflicting task) or :class:`CycleDetectedError` (with a
    witness cycle); on any of these the task is not persisted.
    """
    if not spec.outputs:
        raise ValueError(f"task {spec.name!r} must declare at least one output signal")
    if not spec.command:
        raise ValueError(f"task {spec.name!r} must declare a command")
    overlap = spec.inputs & spec.outputs
    if overlap:
        raise CycleDetectedError([spec.name])
    with catalog.transaction():
        existing = {t.name: t for t in catalog.list_tasks()}
        if spec.name in existing:
            raise DuplicateTaskNameError(f"task {spec.name!r} already exists")
        for t in existing.values():
            clash = t.outputs & spec.outputs
            if clash:
                raise DuplicateProducerError(min(clash), t.name)
        candidate = dict(existing)
        candidate[spec.name] = spec
        cycle = _find_cycle(candidate)
        if cycle is not None:
            raise CycleDetectedError(cycle)
        catalog.add_task_row(spec)
        return TaskGraph(candidate)


def spec_from_manifest(catalog: Catalog, item: dict) -> TaskSpec:
    """Build a task from one manifest object, resolving gs_str_id lists."""
    return TaskSpec(
        name=item["name"],
        inputs=frozenset(
            catalog.resolve_generic(parse_gs_str_id(s)).id for s in item["inputs"]
        ),
        outputs=frozenset(
            catalog.resolve_generic(parse_gs_str_id(s)).id for s in item["outputs"]
        ),
        command=tuple(item["command"]),
        timeout_s=float(item.get("timeout_s", 60.0)),
    )


def load_manifest(catalog: Catalog, path: str | Path) -> list[TaskSpec]:
    """Read a task manifest file (one JSON object or a list of them)."""
    raw = json.loads(Path(path).read_text())
    items = raw if isinstance(raw, list) else [raw]
    return [spec_from_manifest(catalog, item) for item in items]


def task_to_manifest(catalog: Catalog, spec: TaskSpec) -> dict:
    def gs(gid: int) -> str:
        g = catalog.get_generic(gid)
        return g.alias or f"{g.name}.{g.data_source}"
    return {
        "name": spec.name,
        "inputs": sorted(gs(g) for g in spec.inputs),
        "outputs": sorted(gs(g) for g in spec.outputs),
        "command": list(spec.command),
        "timeout_s": spec.timeout_s,
    }


def plan(graph: TaskGraph) -> list[set[str]]:
    """Partition tasks into waves: wave k holds the tasks whose producing
    predecessors all lie in earlier waves (longest-path layering)."""
    level: dict[str, int] = {}

    def lvl(name: str) -> int:
        if name not in level:
            preds = graph.predecessors(name)
            level[name] = 0 if not preds else 1 + max(lvl(p) for p in preds)
        return level[name]

    for name in graph.tasks:
        lvl(name)
    waves: list[set[str]] = [set() for _ in range(max(level.values()) + 1)] if level else []
    for name, k in level.items():
        waves[k].add(name)
    return waves


def _latest_outputs(store: "Store", spec: TaskSpec, record: int) -> dict[int, int]:
    out = {}
    for gid in sorted(spec.outputs):
        latest = store.catalog.latest_revision(gid, record)
        if latest is not None:
            out[gid] = latest
    return out


def _is_fresh(store: "Store", spec: TaskSpec, record: int, input_revs: dict[int, int]) -> bool:
    last = store.catalog.last_ok_log(spec.name, record)
    if last is None:
        return False
    return all(
        gid in last.input_revisions and rev <= last.input_revisions[gid]
        for gid, rev in input_revs.items()
    )


def _execute_task(
    store: "Store", spec: TaskSpec, record: int, extra_env: dict[str, str] | None
) -> TaskRunLog:
    started = time.time()

    def finish(status: RunStatus, detail: str = "", outputs: dict[int, int] | None = None):
        log = TaskRunLog(
            task_name=spec.name,
            record_number=record,
            started=started,
            ended=time.time(),
            status=status,
            input_revisions=input_revs,
            output_revisions=outputs or {},
            detail=detail,
        )
        store.catalog.append_run_log(log)
        return log

    input_revs: dict[int, int] = {}
    missing = []
    for gid in sorted(spec.inputs):
        latest = store.catalog.latest_revision(gid, record)
        if latest is None:
            missing.append(gid)
        else:
            input_revs[gid] = latest
    if missing:
        return finish(
            RunStatus.FAILED, f"MissingInput: signals {missing} have no revision for the record"
        )
    if _is_fresh(store, spec, record, input_revs):
        return finish(RunStatus.SKIPPED_FRESH, outputs=_latest_outputs(store, spec, record))

    argv = [arg.replace("{record}", str(record)) for arg in spec.command]
    env = dict(os.environ)
    if extra_env:
        env.update(extra_env)
    env["CDB_RECORD"] = str(record)
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=spec.timeout_s, env=env
        )
    except subprocess.TimeoutExpired:
        return finish(RunStatus.TIMEOUT, f"timed out after {spec.timeout_s}s")
    except OSError as e:
        return finish(RunStatus.FAILED, f"cannot spawn command: {e}")
    if proc.returncode != 0:
        return finish(
            RunStatus.FAILED, f"exit code {proc.returncode}: {proc.stderr.strip()[-500:]}"
        )
    return finish(RunStatus.OK, outputs=_latest_outputs(store, spec, record))


def run(
    store: "Store",
    graph: TaskGraph,
    record_number: int,
    parallelism: int = 1,
    extra_env: dict[str, str] | None = None,
) -> list[TaskRunLog]:
    """Execute the whole graph for one record with a bounded worker pool.

    Per-task failures are recorded in the returned logs, never raised; a
    task downstream of a failed producer is logged FAILED(MissingInput)
    without executing.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    record = store.catalog.resolve_record_number(record_number)
    preds = {name: graph.predecessors(name) for name in graph.tasks}
    logs: dict[str, TaskRunLog] = {}
    succeeded: set[str] = set()
    failed: set[str] = set()
    pending = set(graph.tasks)
    running: dict = {}

    def cascade_failures() -> None:
        progressed = True
        while progressed:
            progressed = False
            for name in sorted(pending):
                bad = preds[name] & failed
                if bad:
                    now = time.time()
                    log = TaskRunLog(
                        task_name=name,
                        record_number=record,
                        started=now,
                        ended=now,
                        status=RunStatus.FAILED,
                        detail=f"MissingInput: producer task(s) {sorted(bad)} did not succeed",
                    )
                    store.catalog.append_run_log(log)
                    logs[name] = log
                    failed.add(name)
                    pending.discard(name)
                    progressed = True

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        while pending or running:
            cascade_failures()
            for name in sorted(pending):
                if preds[name] <= succeeded:
                    fut = pool.submit(_execute_task, store, graph.tasks[name], record, extra_env)
                    running[fut] = name
                    pending.discard(name)
            if not running:
                break
            done, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in done:
                name = running.pop(fut)
                log = fut.result()
                logs[name] = log
                if log.status in (RunStatus.OK, RunStatus.SKIPPED_FRESH):
                    succeeded.add(name)
                else:
                    failed.add(name)
    return sorted(logs.values(), key=lambda log: (log.started, log.task_name))


def check_freshness(store: "Store", graph: TaskGraph, record_number: int) -> set[str]:
    """Tasks needing (re-)execution: never run OK for the record, or some
    input now has a newer revision than their last OK run used; staleness
    propagates to all downstream tasks."""
    record = record_number
    stale: set[str] = set()
    for spec in graph.tasks.values():
        last = store.catalog.last_ok_log(spec.name, record)
        if last is None:
            stale.add(spec.name)
            continue
        for gid in spec.inputs:
            latest = store.catalog.latest_revision(gid, record)
            if latest is not None and latest > last.input_revisions.get(gid, 0):
                stale.add(spec.name)
                break
    frontier = set(stale)
    while frontier:
        nxt = set()
        for name in frontier:
            for succ in graph.successors(name):
                if succ not in stale:
                    stale.add(succ)
                    nxt.add(succ)
        frontier = nxt
    return stale
