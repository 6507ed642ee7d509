#!/usr/bin/env python3
"""End-to-end walkthrough: ingest a shot, run a two-stage post-processing
pipeline, then update a source signal and watch freshness re-execute only
the affected tasks.

Usage:
    python scripts/demo_pipeline.py [--root DIR]
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

from pulsedb.daq import ShotConfig, run_shot
from pulsedb.models import TaskSpec
from pulsedb.postproc import add_task, check_freshness, load_graph, run
from pulsedb.store import Config, Store

SMOOTH_SCRIPT = """
import os
import numpy as np
from pulsedb.store import Config, Store
store = Store(Config.from_file(os.environ["CDB_CONFIG"]))
record = int(os.environ["CDB_RECORD"])
sig = store.get_signal("SIM_1_0_0:%d:-1" % record)
kernel = np.ones(8) / 8.0
smooth = np.convolve(sig.values, kernel, mode="same")
store.put_signal("smoothed", record, smooth)
"""

RMS_SCRIPT = """
import os
import numpy as np
from pulsedb.store import Config, Store
store = Store(Config.from_file(os.environ["CDB_CONFIG"]))
record = int(os.environ["CDB_RECORD"])
sig = store.get_signal("smoothed:%d:-1" % record)
store.put_signal("rms", record, np.sqrt(np.mean(sig.values ** 2, keepdims=True)))
"""


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", type=Path, default=None)
    args = parser.parse_args()
    root = args.root or Path(tempfile.mkdtemp(prefix="pulsedb_demo_"))

    store = Store(Config.at(root))
    config_path = root / "config.json"
    config_path.write_text(json.dumps(store.config.to_json_dict()))
    env = {"CDB_CONFIG": str(config_path)}

    record = store.create_record("EXPERIMENT", "demo shot")
    print(f"record {record.record_number} created in {root}")

    report = run_shot(store, ShotConfig(n_channels=4, samples_per_channel=4096,
                                        waveform="noise", seed=3), record.record_number)
    print(f"shot: {report.ok_count} channels, {report.total_bytes / 2**20:.1f} MiB "
          f"in {report.wall_time_s:.2f} s")

    source = store.resolve_generic("SIM_1_0_0")
    smoothed = store.create_generic_signal("smoothed", "demo", alias="smoothed")
    rms = store.create_generic_signal("rms", "demo", alias="rms")
    graph = add_task(store.catalog, TaskSpec(
        "smooth", frozenset({source.id}), frozenset({smoothed.id}),
        (sys.executable, "-c", SMOOTH_SCRIPT), 60.0,
    ))
    graph = add_task(store.catalog, TaskSpec(
        "rms", frozenset({smoothed.id}), frozenset({rms.id}),
        (sys.executable, "-c", RMS_SCRIPT), 60.0,
    ))

    for log in run(store, graph, record.record_number, parallelism=2, extra_env=env):
        print(f"  {log.task_name:<8} {log.status.value:<14} {log.ended - log.started:.2f}s")
    print(f"rms value: {store.get_signal('rms:-1:-1').values[0]:.4f}")

    print("second run (nothing changed):")
    for log in run(store, graph, record.record_number, parallelism=2, extra_env=env):
        print(f"  {log.task_name:<8} {log.status.value}")

    print("storing a corrected source revision...")
    corrected = store.get_signal(f"SIM_1_0_0:{record.record_number}:-1").values * 0.99
    store.put_signal(source.id, record.record_number, corrected)
    print(f"stale tasks now: {sorted(check_freshness(store, graph, record.record_number))}")
    for log in run(store, load_graph(store.catalog), record.record_number,
                   parallelism=2, extra_env=env):
        print(f"  {log.task_name:<8} {log.status.value}")
    print(f"rms value after correction: {store.get_signal('rms:-1:-1').values[0]:.4f}")

    moved = store.migrate_cache()
    print(f"migrated {moved} files to permanent storage; audit: "
          f"{'clean' if not store.audit() else 'VIOLATIONS'}")
    if args.root is None:
        shutil.rmtree(root, ignore_errors=True)


if __name__ == "__main__":
    main()
