from __future__ import annotations

import json

from pulsedb.store import CONFIG_ENV_VAR, Config


def test_config_at_layout(tmp_path):
    config = Config.at(tmp_path / "root")
    assert config.catalog_path == tmp_path / "root" / "catalog.db"
    assert config.data_root == tmp_path / "root" / "data"
    assert config.cache_root == tmp_path / "root" / "cache"


def test_config_from_file_resolves_relative_paths(tmp_path):
    path = tmp_path / "conf" / "config.json"
    path.parent.mkdir()
    path.write_text(json.dumps({
        "catalog_path": "cat.db",
        "data_root": "d",
        "cache_root": "/abs/cache",
        "listen_addr": "0.0.0.0:9999",
    }))
    config = Config.from_file(path)
    assert config.catalog_path == path.parent / "cat.db"
    assert config.data_root == path.parent / "d"
    assert str(config.cache_root) == "/abs/cache"
    assert config.listen_addr == "0.0.0.0:9999"


def test_config_from_env(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(Config.at(tmp_path / "s").to_json_dict()))
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    assert Config.from_env().catalog_path == tmp_path / "s" / "catalog.db"
    monkeypatch.delenv(CONFIG_ENV_VAR)
    assert Config.from_env(default_root=tmp_path / "dflt").catalog_path == tmp_path / "dflt" / "catalog.db"


def test_config_overrides(tmp_path):
    config = Config.at(tmp_path)
    updated = config.with_overrides(listen_addr="127.0.0.1:1", data_root=tmp_path / "other", catalog_path=None)
    assert updated.listen_addr == "127.0.0.1:1"
    assert updated.data_root == tmp_path / "other"
    assert updated.catalog_path == config.catalog_path  # None means keep
