"""Simulated multi-node acquisition: N synthetic channels write their
signals directly and concurrently into the store on a trigger.

Channels are laid out as ``SIM_<node>/<board>/<channel>`` keys.  With
auto-provisioning enabled (the default) the harness creates the missing
generic signals and channel mappings on first use, mirroring automatic
assignment during acquisition setup.  Every channel performs a normal
``put_signal`` with a linear time axis on its own thread; there is no
central collection point, so the run exercises catalog linearizability and
file-store exclusivity end to end.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .container import DTYPES
from .errors import NoMappingError, UnsupportedDtypeError
from .identifier import ChannelKey
from .models import LinearTime, SignalKind
from .signals import Signal
from .store import Store

WAVEFORMS = ("ramp", "sine", "noise")


@dataclass(frozen=True)
class ShotConfig:
    n_channels: int = 8
    samples_per_channel: int = 1024
    dtype: str = "f64"
    waveform: str = "ramp"
    seed: int = 0
    computer_prefix: str = "SIM"
    boards_per_computer: int = 4
    channels_per_board: int = 8
    t0: float = 0.0
    dt: float = 1e-6
    auto_provision: bool = True

    def __post_init__(self) -> None:
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"waveform must be one of {WAVEFORMS}")
        if self.dtype not in DTYPES:
            raise UnsupportedDtypeError(f"unknown dtype {self.dtype!r}")

    def channel_key(self, index: int) -> ChannelKey:
        per_node = self.boards_per_computer * self.channels_per_board
        node = 1 + index // per_node
        board = (index // self.channels_per_board) % self.boards_per_computer
        channel = index % self.channels_per_board
        return ChannelKey(f"{self.computer_prefix}_{node}", str(board), str(channel))

    def waveform_values(self, index: int) -> np.ndarray:
        n = self.samples_per_channel
        if self.waveform == "ramp":
            values = np.arange(n, dtype=np.float64)
        elif self.waveform == "sine":
            values = np.sin(2.0 * np.pi * (index + 1) * np.arange(n) / max(n, 1))
        else:
            values = np.random.default_rng([self.seed, index]).standard_normal(n)
        return values.astype(DTYPES[self.dtype][1])


@dataclass(frozen=True)
class ChannelResult:
    key: str
    status: str  # "OK" or the error code
    revision: int | None = None
    nbytes: int = 0
    error: str = ""


@dataclass(frozen=True)
class IngestReport:
    record_number: int
    results: list[ChannelResult] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def ok_count(self) -> int:
        return sum(1 for r in self.results if r.status == "OK")

    @property
    def total_bytes(self) -> int:
        return sum(r.nbytes for r in self.results if r.status == "OK")

    @property
    def throughput_mib_s(self) -> float:
        if self.wall_time_s <= 0:
            return 0.0
        return self.total_bytes / (1024 * 1024) / self.wall_time_s


def _alias_for(key: ChannelKey) -> str:
    return f"{key.computer_id}_{key.board_id}_{key.channel_id}"


def provision_channels(
    store: Store, config: ShotConfig, record_number: int = 1
) -> list[tuple[ChannelKey, int]]:
    """Ensure a generic signal and a channel mapping exist for every key,
    resolving against the record the shot will write to."""
    out = []
    for i in range(config.n_channels):
        key = config.channel_key(i)
        try:
            gid = store.catalog.resolve_channel(key, record_number)
        except NoMappingError:
            if not config.auto_provision:
                raise
            generic = store.create_generic_signal(
                name=_alias_for(key),
                data_source="daq_sim",
                alias=_alias_for(key),
                kind=SignalKind.FILE,
                units="V",
                description=f"synthetic channel {key}",
            )
            store.set_channel_mapping(key, generic.id, config_text=f"waveform={config.waveform}")
            gid = generic.id
        out.append((key, gid))
    return out


def run_shot(store: Store, config: ShotConfig, record_number: int) -> IngestReport:
    """Trigger all channels at once; each writes one signal revision."""
    record = store.catalog.resolve_record_number(record_number)
    channels = provision_channels(store, config, record)

    def write(args: tuple[int, tuple[ChannelKey, int]]) -> ChannelResult:
        index, (key, gid) = args
        try:
            values = config.waveform_values(index)
            ds = store.put_signal(
                gid, record, values, time_axis=LinearTime(config.t0, config.dt)
            )
            return ChannelResult(str(key), "OK", ds.revision, values.nbytes)
        except Exception as e:  # collected per channel, never raised
            return ChannelResult(str(key), getattr(e, "code", "Error"), error=str(e))

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=config.n_channels) as pool:
        results = list(pool.map(write, enumerate(channels)))
    wall = time.perf_counter() - start
    return IngestReport(record, results, wall)


def resolve_and_read(store: Store, channel_str_id: str) -> Signal:
    """Read a signal through its DAQ/FS channel identifier."""
    return store.get_signal(channel_str_id)
