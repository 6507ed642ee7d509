"""Operator command line: administration, data access, ingestion simulation
and post-processing runs.

Every command is a thin wrapper: it parses arguments, calls the library and
serializes the result (JSON for structured output).  Exit codes: 0 success,
1 domain error (message on stderr), 2 usage error.

Configuration precedence: command-line flags > the config file named by
``CDB_CONFIG`` > built-in defaults (a ``./pulsedb_store`` directory).
"""

from __future__ import annotations

import functools
import json
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import postproc as pp
from .daq import ShotConfig, run_shot
from .errors import PulseDBError
from .models import RunStatus
from .service import serve as serve_service
from .service import wire_signal
from .store import Config, Store


class _DomainError(click.ClickException):
    exit_code = 1

    def __init__(self, exc: PulseDBError):
        super().__init__(f"{exc.code}: {exc}")


def domain_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except PulseDBError as e:
            raise _DomainError(e) from e
    return wrapper


def _echo_json(doc) -> None:
    click.echo(json.dumps(doc, sort_keys=True, indent=2))


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Config file (JSON); defaults to $CDB_CONFIG.")
@click.option("--catalog-path", type=click.Path(), default=None)
@click.option("--data-root", type=click.Path(), default=None)
@click.option("--cache-root", type=click.Path(), default=None)
@click.option("--listen", "listen_addr", default=None, help="host:port for serve.")
@click.pass_context
def cli(ctx, config_path, catalog_path, data_root, cache_root, listen_addr):
    """Append-only revisioned store for pulsed-experiment signals."""
    config = Config.from_file(config_path) if config_path else Config.from_env()
    ctx.obj = config.with_overrides(
        catalog_path=catalog_path,
        data_root=data_root,
        cache_root=cache_root,
        listen_addr=listen_addr,
    )


def _store(ctx) -> Store:
    return Store(ctx.obj)


# -- records -----------------------------------------------------------------


@cli.group()
def record():
    """Create and inspect records."""


@record.command("new")
@click.option("--type", "record_type", type=click.Choice(["EXPERIMENT", "MODEL", "VOID"]),
              default="EXPERIMENT", show_default=True)
@click.option("--description", default="")
@click.pass_context
@domain_errors
def record_new(ctx, record_type, description):
    rec = _store(ctx).create_record(record_type, description)
    _echo_json(rec.to_json_dict())


@record.command("show", context_settings={"ignore_unknown_options": True})
@click.argument("number", type=int)
@click.pass_context
@domain_errors
def record_show(ctx, number):
    store = _store(ctx)
    rec = store.catalog.get_record(store.catalog.resolve_record_number(number))
    _echo_json(rec.to_json_dict())


# -- generic signals ------------------------------------------------------------


@cli.group()
def gs():
    """Create and list generic signals."""


@gs.command("new")
@click.option("--name", required=True)
@click.option("--source", "data_source", required=True)
@click.option("--alias", default=None)
@click.option("--kind", type=click.Choice(["FILE", "LINEAR"]), default="FILE", show_default=True)
@click.option("--units", default="")
@click.option("--description", default="")
@click.option("--axis", "axes", type=int, multiple=True, help="Axis generic id (repeatable).")
@click.pass_context
@domain_errors
def gs_new(ctx, name, data_source, alias, kind, units, description, axes):
    generic = _store(ctx).create_generic_signal(
        name, data_source, alias=alias, kind=kind, units=units,
        description=description, axes=axes,
    )
    _echo_json(generic.to_json_dict())


@gs.command("list")
@click.pass_context
@domain_errors
def gs_list(ctx):
    _echo_json([g.to_json_dict() for g in _store(ctx).catalog.list_generic_signals()])


# -- data access -------------------------------------------------------------------


def _load_values_file(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    if path.suffix == ".json":
        return np.asarray(json.loads(path.read_text()))
    return np.loadtxt(path)


@cli.command("get", context_settings={"ignore_unknown_options": True})
@click.argument("str_id")
@click.option("--json", "as_json", is_flag=True, help="Print the full signal as JSON.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the dataset to a container file (raw levels unless"
                   " the identifier carries a units tag).")
@click.option("--length", type=int, default=None, help="Length for LINEAR signals.")
@click.pass_context
@domain_errors
def get_cmd(ctx, str_id, as_json, out_path, length):
    """Read a signal by its string identifier."""
    store = _store(ctx)
    sig = store.get_signal(str_id, length=length)
    if as_json:
        _echo_json(wire_signal(sig, inline_limit=None))
        return
    if out_path:
        from .container import Dataset, write_container

        raw = store.get_signal(
            str_id if "[" in str_id else f"{str_id}[raw]", length=length
        ).values
        write_container(out_path, [Dataset.from_array("data", raw)])
        click.echo(f"wrote {out_path}")
        return
    meta = sig.meta
    click.echo(f"str_id    {sig.generic.alias or sig.generic.name}"
               f":{meta.record_number}:{meta.revision}[{sig.units_tag}]")
    click.echo(f"kind      {sig.generic.kind.value}")
    click.echo(f"units     {sig.generic.units}")
    click.echo(f"shape     {list(sig.values.shape)}")
    click.echo(f"dtype     {sig.values.dtype}")
    click.echo(f"transform raw * {meta.coefficient} + {meta.offset}")


@cli.command("put")
@click.argument("gs_str_id")
@click.argument("record_number", type=int)
@click.option("--values", "values_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Values file (.npy, .json or text).")
@click.option("--t0", type=float, default=None)
@click.option("--dt", type=float, default=None)
@click.option("--offset", type=float, default=0.0)
@click.option("--coeff", "coefficient", type=float, default=1.0)
@click.option("--note", default="")
@click.pass_context
@domain_errors
def put_cmd(ctx, gs_str_id, record_number, values_path, t0, dt, offset, coefficient, note):
    """Store new numerical data as a fresh revision."""
    from .models import LinearTime
    from .service import canonical_str_id

    store = _store(ctx)
    values = _load_values_file(Path(values_path))
    time_axis = LinearTime(t0, dt) if t0 is not None and dt is not None else None
    ds = store.put_signal(gs_str_id, record_number, values, time_axis=time_axis,
                          offset=offset, coefficient=coefficient, note=note)
    doc = ds.to_json_dict()
    doc["str_id"] = canonical_str_id(store.catalog.get_generic(ds.generic_id), ds)
    _echo_json(doc)


@cli.command("update", context_settings={"ignore_unknown_options": True})
@click.argument("str_id")
@click.option("--offset", type=float, default=None)
@click.option("--coeff", "coefficient", type=float, default=None)
@click.option("--t0", type=float, default=None)
@click.option("--dt", type=float, default=None)
@click.pass_context
@domain_errors
def update_cmd(ctx, str_id, offset, coefficient, t0, dt):
    """Create a metadata-only revision of an existing signal."""
    from .models import LinearTime
    from .service import canonical_str_id

    store = _store(ctx)
    kwargs = {}
    if offset is not None:
        kwargs["offset"] = offset
    if coefficient is not None:
        kwargs["coefficient"] = coefficient
    if t0 is not None and dt is not None:
        kwargs["time_axis"] = LinearTime(t0, dt)
    ds = store.update_signal(str_id, **kwargs)
    doc = ds.to_json_dict()
    doc["str_id"] = canonical_str_id(store.catalog.get_generic(ds.generic_id), ds)
    _echo_json(doc)


@cli.command("migrate-cache")
@click.pass_context
@domain_errors
def migrate_cache_cmd(ctx):
    """Move closed cache files to permanent storage."""
    click.echo(str(_store(ctx).migrate_cache()))


# -- post-processing -----------------------------------------------------------------


@cli.group()
def task():
    """Manage post-processing tasks."""


@task.command("add")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@domain_errors
def task_add(ctx, manifest):
    store = _store(ctx)
    added = []
    for spec in pp.load_manifest(store.catalog, manifest):
        pp.add_task(store.catalog, spec)
        added.append(spec.name)
    _echo_json({"added": added})


@cli.group(name="postproc")
def postproc_group():
    """Run and inspect the post-processing pipeline."""


@postproc_group.command("run", context_settings={"ignore_unknown_options": True})
@click.argument("record_number", type=int)
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.pass_context
@domain_errors
def postproc_run(ctx, record_number, parallelism):
    store = _store(ctx)
    graph = pp.load_graph(store.catalog)
    logs = pp.run(store, graph, record_number, parallelism=parallelism)
    failed = False
    for log in logs:
        line = f"{log.task_name:<20} {log.status.value:<14} {log.ended - log.started:8.3f}s"
        if log.detail:
            line += f"  {log.detail}"
        click.echo(line)
        failed = failed or log.status in (RunStatus.FAILED, RunStatus.TIMEOUT)
    if failed:
        ctx.exit(1)


@postproc_group.command("stale", context_settings={"ignore_unknown_options": True})
@click.argument("record_number", type=int)
@click.pass_context
@domain_errors
def postproc_stale(ctx, record_number):
    store = _store(ctx)
    graph = pp.load_graph(store.catalog)
    _echo_json({"stale": sorted(pp.check_freshness(store, graph, record_number))})


# -- ingestion & service -----------------------------------------------------------------


@cli.command("shot")
@click.option("--channels", type=int, default=8, show_default=True)
@click.option("--samples", type=int, default=1024, show_default=True)
@click.option("--record", "record_number", type=int, required=True)
@click.option("--waveform", type=click.Choice(["ramp", "sine", "noise"]), default="ramp",
              show_default=True)
@click.option("--dtype", default="f64", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
@domain_errors
def shot_cmd(ctx, channels, samples, record_number, waveform, dtype, seed):
    """Simulate one acquisition trigger: N channels write concurrently."""
    store = _store(ctx)
    config = ShotConfig(
        n_channels=channels, samples_per_channel=samples,
        waveform=waveform, dtype=dtype, seed=seed,
    )
    report = run_shot(store, config, record_number)
    failures = [asdict(r) for r in report.results if r.status != "OK"]
    _echo_json({
        "record_number": report.record_number,
        "channels": len(report.results),
        "ok": report.ok_count,
        "total_bytes": report.total_bytes,
        "wall_time_s": round(report.wall_time_s, 4),
        "throughput_mib_s": round(report.throughput_mib_s, 2),
        "failures": failures,
    })
    if failures:
        ctx.exit(1)


@cli.command("serve")
@click.pass_context
@domain_errors
def serve_cmd(ctx):
    """Run the JSON/HTTP service until interrupted."""
    serve_service(ctx.obj)


main = cli

if __name__ == "__main__":
    main()
