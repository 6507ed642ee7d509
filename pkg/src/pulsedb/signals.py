"""User-facing signal reads and writes over the catalog and file store.

The affine transform ``physical = raw * coefficient + offset`` is applied
in exactly one place (:func:`apply_transform`) so that the two unit views
are always related by the same floating-point expression.  LINEAR signals
are virtual: their raw view is the index ramp ``0..length`` and the same
transform yields the materialized values, which keeps the raw/default
relationship uniform across both signal kinds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np

from .container import Dataset, dtype_name_for
from .errors import (
    KindMismatchError,
    MissingLengthError,
    NotFoundError,
    ShapeMismatchError,
)
from .identifier import SignalRef, parse_str_id
from .models import AxisRef, DataSignal, GenericSignal, LinearTime, SignalKind, TimeAxis

if TYPE_CHECKING:
    from .store import Store

UNSET: Any = object()


def apply_transform(raw: np.ndarray, coefficient: float, offset: float) -> np.ndarray:
    """Convert raw acquisition levels to physical units."""
    return raw * coefficient + offset


@dataclass
class Signal:
    """A materialized signal: metadata plus numeric content.

    ``axes`` holds one entry per axis of the generic signal (depth 1; the
    axes of axes are not materialized), ``None`` where the realization has
    no stored axis for that dimension.
    """

    meta: DataSignal
    generic: GenericSignal
    values: np.ndarray
    units_tag: str = "default"
    time: np.ndarray | None = None
    axes: list["Signal | None"] = field(default_factory=list)


def _load_values(
    store: "Store",
    ds: DataSignal,
    generic: GenericSignal,
    units_tag: str,
    length: int | None,
) -> np.ndarray:
    if generic.kind is SignalKind.FILE:
        raw = store.files.read_dataset(ds.data_file, ds.dataset_name).to_array()
    else:
        if length is None:
            raise MissingLengthError(
                f"LINEAR signal {generic.id} needs a length (none derivable from context)"
            )
        raw = np.arange(length)
    if units_tag == "raw":
        return raw
    return apply_transform(raw, ds.coefficient, ds.offset)


def materialize_linear(store: "Store", meta: DataSignal, length: int) -> np.ndarray:
    """Evaluate a LINEAR signal: offset + coefficient * i for i in 0..length."""
    generic = store.catalog.get_generic(meta.generic_id)
    if generic.kind is not SignalKind.LINEAR:
        raise KindMismatchError(f"generic signal {generic.id} is not LINEAR")
    if length < 0:
        raise ValueError("length must be non-negative")
    return apply_transform(np.arange(length), meta.coefficient, meta.offset)


def _materialize_axis(store: "Store", axis: AxisRef, record: int, length: int | None) -> Signal:
    ds = store.catalog.get_data_signal(axis.generic_id, record, axis.revision)
    generic = store.catalog.get_generic(axis.generic_id)
    values = _load_values(store, ds, generic, "default", length)
    return Signal(ds, generic, values, "default")


def get_signal(store: "Store", str_id: str | SignalRef, length: int | None = None) -> Signal:
    """Read a data signal with its time axis and depth-1 axes.

    ``length`` is only needed when reading a LINEAR signal directly; axes
    take their lengths from the main array's dimensions.
    """
    ref = parse_str_id(str_id) if isinstance(str_id, str) else str_id
    ds = store.catalog.find_data_signal(ref)
    generic = store.catalog.get_generic(ds.generic_id)
    values = _load_values(store, ds, generic, ref.units_tag, length)

    time: np.ndarray | None = None
    if ds.time_axis is not None and values.ndim >= 1:
        if isinstance(ds.time_axis, LinearTime):
            time = apply_transform(np.arange(values.shape[0]), ds.time_axis.dt, ds.time_axis.t0)
        else:
            time = _materialize_axis(
                store, AxisRef(ds.time_axis.generic_id, ds.time_axis.revision),
                ds.record_number, values.shape[0],
            ).values

    axes: list[Signal | None] = []
    for i, axis in enumerate(ds.axis_revisions):
        if axis is None:
            axes.append(None)
            continue
        axis_len = values.shape[i] if i < values.ndim else None
        axes.append(_materialize_axis(store, axis, ds.record_number, axis_len))
    return Signal(ds, generic, values, ref.units_tag, time, axes)


def _resolve_axis_slot(
    store: "Store",
    axis_generic_id: int,
    record: int,
    given: "int | AxisRef | None",
) -> AxisRef | None:
    if given is None:
        latest = store.catalog.latest_revision(axis_generic_id, record)
        return None if latest is None else AxisRef(axis_generic_id, latest)
    if isinstance(given, AxisRef):
        return given
    revision = store.catalog.resolve_revision(axis_generic_id, record, int(given))
    return AxisRef(axis_generic_id, revision)


def store_signal(
    store: "Store",
    generic_ref,
    record_number: int,
    *,
    file_ref: int | None = None,
    dataset_name: str = "data",
    offset: float = 0.0,
    coefficient: float = 1.0,
    time_axis: TimeAxis = None,
    axes_refs: Sequence[int | AxisRef | None] | None = None,
    note: str = "",
) -> DataSignal:
    """Store a data signal whose numbers (for FILE kind) are already in a
    closed container file; allocates the revision and inserts the row."""
    generic = store.catalog.resolve_generic(generic_ref)
    record = store.catalog.resolve_record_number(record_number)

    if axes_refs is None:
        axes_refs = [None] * len(generic.axes)
    if len(axes_refs) != len(generic.axes):
        raise ShapeMismatchError(
            f"generic {generic.id} has {len(generic.axes)} axes, got {len(axes_refs)} refs"
        )
    axis_revisions = tuple(
        _resolve_axis_slot(store, generic.axes[i], record, given)
        for i, given in enumerate(axes_refs)
    )

    file_id = None
    ds_name = None
    if generic.kind is SignalKind.FILE:
        if file_ref is None:
            raise KindMismatchError(f"FILE generic {generic.id} requires a data file")
        file_id = int(getattr(file_ref, "id", file_ref))
        if dataset_name not in store.files.dataset_names(file_id):
            raise NotFoundError(f"data file {file_id} has no dataset {dataset_name!r}")
        ds_name = dataset_name
    elif file_ref is not None:
        raise KindMismatchError(f"LINEAR generic {generic.id} cannot take a data file")

    revision = store.catalog.allocate_revision(generic.id, record)
    return store.catalog.insert_data_signal(
        DataSignal(
            generic_id=generic.id,
            record_number=record,
            revision=revision,
            offset=offset,
            coefficient=coefficient,
            time_axis=time_axis,
            axis_revisions=axis_revisions,
            data_file=file_id,
            dataset_name=ds_name,
            note=note,
        )
    )


def put_signal(
    store: "Store",
    generic_ref,
    record_number: int,
    values: np.ndarray,
    *,
    time_axis: TimeAxis = None,
    axes_values: Sequence[np.ndarray | int | None] | None = None,
    offset: float = 0.0,
    coefficient: float = 1.0,
    note: str = "",
) -> DataSignal:
    """Store numerical data together with its axes in one call.

    Creates the container file, writes the value dataset (and one dataset
    per provided axis array), closes the file, stores the axis data
    signals and finally the main signal.  An axis slot may also be an
    existing revision number, or None to reuse the latest stored axis
    revision for the record (if any).
    """
    generic = store.catalog.resolve_generic(generic_ref)
    record = store.catalog.resolve_record_number(record_number)
    arr = np.asarray(values)
    dtype_name_for(arr)  # fail fast on unsupported dtypes

    if generic.kind is not SignalKind.FILE:
        raise KindMismatchError(f"put_signal needs a FILE generic, got {generic.kind.value}")
    if generic.axes and arr.ndim != len(generic.axes):
        raise ShapeMismatchError(
            f"values have {arr.ndim} dimensions, generic {generic.id} has {len(generic.axes)} axes"
        )
    if axes_values is None:
        axes_values = [None] * len(generic.axes)
    if len(axes_values) != len(generic.axes):
        raise ShapeMismatchError(
            f"generic {generic.id} has {len(generic.axes)} axes, got {len(axes_values)} axis values"
        )
    axis_arrays: dict[int, np.ndarray] = {}
    for i, av in enumerate(axes_values):
        if av is None or isinstance(av, (int, np.integer, AxisRef)):
            continue
        a = np.asarray(av)
        if a.ndim != 1 or a.shape[0] != arr.shape[i]:
            raise ShapeMismatchError(
                f"axis {i} array must be 1-D of length {arr.shape[i]}, got shape {a.shape}"
            )
        axis_arrays[i] = a

    handle = store.files.new_data_file(record, generic.alias or generic.name)
    handle.write_dataset(Dataset.from_array("data", arr))
    for i, a in axis_arrays.items():
        handle.write_dataset(Dataset.from_array(f"axis{i}", a))
    file_ref = store.files.close_file(handle)

    axis_slots: list[int | AxisRef | None] = []
    for i, av in enumerate(axes_values):
        if i in axis_arrays:
            axis_generic = store.catalog.get_generic(generic.axes[i])
            revision = store.catalog.allocate_revision(axis_generic.id, record)
            stored = store.catalog.insert_data_signal(
                DataSignal(
                    generic_id=axis_generic.id,
                    record_number=record,
                    revision=revision,
                    axis_revisions=(None,) * len(axis_generic.axes),
                    data_file=file_ref.id,
                    dataset_name=f"axis{i}",
                )
            )
            axis_slots.append(AxisRef(axis_generic.id, stored.revision))
        else:
            axis_slots.append(av)

    return store_signal(
        store,
        generic.id,
        record,
        file_ref=file_ref.id,
        dataset_name="data",
        offset=offset,
        coefficient=coefficient,
        time_axis=time_axis,
        axes_refs=axis_slots,
        note=note,
    )


def update_signal(
    store: "Store",
    str_id: str | SignalRef,
    *,
    offset: float = UNSET,
    coefficient: float = UNSET,
    time_axis: TimeAxis = UNSET,
    axis_revisions: Sequence[AxisRef | None] = UNSET,
) -> DataSignal:
    """Create a new revision that shares the source's data file and changes
    only the given metadata fields (offset, coefficient, time axis, axes)."""
    ref = parse_str_id(str_id) if isinstance(str_id, str) else str_id
    source = store.catalog.find_data_signal(ref)
    revision = store.catalog.allocate_revision(source.generic_id, source.record_number)
    return store.catalog.insert_data_signal(
        DataSignal(
            generic_id=source.generic_id,
            record_number=source.record_number,
            revision=revision,
            offset=source.offset if offset is UNSET else float(offset),
            coefficient=source.coefficient if coefficient is UNSET else float(coefficient),
            time_axis=source.time_axis if time_axis is UNSET else time_axis,
            axis_revisions=(
                source.axis_revisions if axis_revisions is UNSET else tuple(axis_revisions)
            ),
            data_file=source.data_file,
            dataset_name=source.dataset_name,
            note=source.note,
        )
    )
