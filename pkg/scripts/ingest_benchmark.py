#!/usr/bin/env python3
"""Ingestion throughput sweep: concurrent channel writes into a fresh store.

Usage:
    python scripts/ingest_benchmark.py [--channels 32 64 128] [--samples 262144]
                                       [--root DIR] [--keep]

Each configuration triggers one shot; the table reports wall time and
throughput.  By default the store lives in a temporary directory that is
removed afterwards.
"""

from __future__ import annotations

import argparse
import shutil
import tempfile
from pathlib import Path

from pulsedb.daq import ShotConfig, run_shot
from pulsedb.store import Config, Store


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--channels", type=int, nargs="+", default=[16, 64, 128])
    parser.add_argument("--samples", type=int, default=262144)
    parser.add_argument("--waveform", choices=["ramp", "sine", "noise"], default="noise")
    parser.add_argument("--root", type=Path, default=None, help="store directory")
    parser.add_argument("--keep", action="store_true", help="keep the store afterwards")
    args = parser.parse_args()

    root = args.root or Path(tempfile.mkdtemp(prefix="pulsedb_bench_"))
    store = Store(Config.at(root))
    print(f"store at {root}")
    print(f"{'channels':>9} {'samples':>9} {'MiB':>8} {'wall s':>8} {'MiB/s':>8} {'ok':>4}")
    try:
        for n in args.channels:
            record = store.create_record("EXPERIMENT", f"bench {n}ch")
            config = ShotConfig(
                n_channels=n, samples_per_channel=args.samples,
                waveform=args.waveform, seed=1,
            )
            report = run_shot(store, config, record.record_number)
            mib = report.total_bytes / 2**20
            print(
                f"{n:>9} {args.samples:>9} {mib:>8.1f} {report.wall_time_s:>8.2f}"
                f" {report.throughput_mib_s:>8.1f} {report.ok_count:>4}"
            )
            problems = store.audit()
            if problems:
                raise SystemExit(f"catalog audit failed: {problems[:3]}")
    finally:
        if not args.keep and args.root is None:
            shutil.rmtree(root, ignore_errors=True)


if __name__ == "__main__":
    main()
