"""Store facade: configuration plus catalog and file store wired together."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

from . import signals
from .catalog import Catalog
from .filestore import FileStore

CONFIG_ENV_VAR = "CDB_CONFIG"


@dataclass(frozen=True)
class Config:
    catalog_path: Path
    data_root: Path
    cache_root: Path
    listen_addr: str = "127.0.0.1:8347"

    @classmethod
    def at(cls, root: str | Path) -> "Config":
        """Conventional layout under one root directory."""
        root = Path(root)
        return cls(root / "catalog.db", root / "data", root / "cache")

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        raw = json.loads(Path(path).read_text())
        base = Path(path).resolve().parent
        def _path(key: str) -> Path:
            p = Path(raw[key])
            return p if p.is_absolute() else base / p
        return cls(
            catalog_path=_path("catalog_path"),
            data_root=_path("data_root"),
            cache_root=_path("cache_root"),
            listen_addr=raw.get("listen_addr", cls.listen_addr),
        )

    @classmethod
    def from_env(cls, default_root: str | Path = "./pulsedb_store") -> "Config":
        path = os.environ.get(CONFIG_ENV_VAR)
        if path:
            return cls.from_file(path)
        return cls.at(default_root)

    def with_overrides(self, **kwargs) -> "Config":
        updates = {k: v for k, v in kwargs.items() if v is not None}
        for key in ("catalog_path", "data_root", "cache_root"):
            if key in updates:
                updates[key] = Path(updates[key])
        return replace(self, **updates)

    def to_json_dict(self) -> dict:
        return {
            "catalog_path": str(self.catalog_path),
            "data_root": str(self.data_root),
            "cache_root": str(self.cache_root),
            "listen_addr": self.listen_addr,
        }


class Store:
    """One opened store: the single object the CLI, service and harness use."""

    def __init__(self, config: Config, now_fn=None):
        self.config = config
        self.catalog = Catalog(config.catalog_path, now_fn=now_fn)
        self.files = FileStore(self.catalog, config.data_root, config.cache_root)

    @classmethod
    def at(cls, root: str | Path) -> "Store":
        return cls(Config.at(root))

    # -- signal API --------------------------------------------------------

    def get_signal(self, str_id, length=None) -> signals.Signal:
        return signals.get_signal(self, str_id, length=length)

    def put_signal(self, generic_ref, record_number, values, **kwargs):
        return signals.put_signal(self, generic_ref, record_number, values, **kwargs)

    def store_signal(self, generic_ref, record_number, **kwargs):
        return signals.store_signal(self, generic_ref, record_number, **kwargs)

    def update_signal(self, str_id, **kwargs):
        return signals.update_signal(self, str_id, **kwargs)

    def materialize_linear(self, meta, length):
        return signals.materialize_linear(self, meta, length)

    # -- catalog / filestore shortcuts ---------------------------------------

    def create_record(self, record_type, description=""):
        return self.catalog.create_record(record_type, description)

    def create_generic_signal(self, *args, **kwargs):
        return self.catalog.create_generic_signal(*args, **kwargs)

    def resolve_generic(self, locator):
        return self.catalog.resolve_generic(locator)

    def set_channel_mapping(self, *args, **kwargs):
        return self.catalog.set_channel_mapping(*args, **kwargs)

    def migrate_cache(self) -> int:
        return self.files.migrate_cache()

    def audit(self) -> list[str]:
        return self.catalog.audit()

    def close(self) -> None:
        self.catalog.close()
