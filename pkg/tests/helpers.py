"""Shared helpers: task commands for scheduler tests and brute-force
oracles kept deliberately independent of the production implementations."""

from __future__ import annotations

import json
import sys

from pulsedb.models import TaskSpec

# Stores ramp data for each alias passed on argv, after an optional sleep.
TASK_SCRIPT = """
import os, sys, time
import numpy as np
from pulsedb.store import Config, Store

sleep_s = float(sys.argv[1])
aliases = sys.argv[2:]
store = Store(Config.from_file(os.environ["CDB_CONFIG"]))
record = int(os.environ["CDB_RECORD"])
time.sleep(sleep_s)
for alias in aliases:
    store.put_signal(alias, record, np.arange(4, dtype=np.float64))
"""


def storing_command(sleep_s: float, *aliases: str) -> tuple[str, ...]:
    return (sys.executable, "-c", TASK_SCRIPT, str(sleep_s), *aliases)


def failing_command() -> tuple[str, ...]:
    return (sys.executable, "-c", "import sys; sys.exit(2)")


def write_store_config(tmp_path, store) -> dict[str, str]:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(store.config.to_json_dict()))
    return {"CDB_CONFIG": str(path)}


# --- brute-force oracles ---------------------------------------------------


def task_edges(tasks: dict[str, TaskSpec]) -> dict[str, set[str]]:
    return {
        a: {
            b
            for b, tb in tasks.items()
            if b != a and tasks[a].outputs & tb.inputs
        }
        for a in tasks
    }


def brute_force_has_cycle(tasks: dict[str, TaskSpec]) -> bool:
    """Cycle detection by exhaustive simple-path enumeration."""
    edges = task_edges(tasks)

    def reaches(start: str, node: str, seen: frozenset[str]) -> bool:
        for nxt in edges[node]:
            if nxt == start:
                return True
            if nxt not in seen and reaches(start, nxt, seen | {nxt}):
                return True
        return False

    return any(reaches(n, n, frozenset({n})) for n in tasks) or any(
        t.inputs & t.outputs for t in tasks.values()
    )


def brute_force_valid(tasks: dict[str, TaskSpec]) -> bool:
    """Accept iff no cycle and every output signal has exactly one producer."""
    producers: dict[int, str] = {}
    for name, spec in tasks.items():
        for out in spec.outputs:
            if out in producers:
                return False
            producers[out] = name
    return not brute_force_has_cycle(tasks)


def brute_force_wave(tasks: dict[str, TaskSpec], name: str) -> int:
    """Wave index = length of the longest producer chain above the task,
    found by enumerating every simple path of task edges."""
    edges = task_edges(tasks)
    incoming = {b: {a for a in tasks if b in edges[a]} for b in tasks}

    def longest(node: str, seen: frozenset[str]) -> int:
        best = 0
        for pred in incoming[node]:
            if pred not in seen:
                best = max(best, 1 + longest(pred, seen | {pred}))
        return best

    return longest(name, frozenset({name}))


def brute_force_downstream(tasks: dict[str, TaskSpec], signal_ids: set[int]) -> set[str]:
    """Reachability from the given signals over task edges."""
    edges = task_edges(tasks)
    hit = {n for n, t in tasks.items() if t.inputs & signal_ids}
    changed = True
    while changed:
        changed = False
        for a in list(hit):
            for b in edges[a]:
                if b not in hit:
                    hit.add(b)
                    changed = True
    return hit
