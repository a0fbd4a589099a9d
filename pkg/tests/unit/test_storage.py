"""Tests for storage interface."""

import pytest

from src.storage.storage_interface import LocalDataStore, get_storage


def test_local_storage_write_read(tmp_path):
    """Test basic write and read operations."""
    store = LocalDataStore(base_path=str(tmp_path))

    data = b"t,P\n0.0,1.0\n"
    store.write("run/riccati.csv", data)

    assert store.read("run/riccati.csv") == data


def test_local_storage_missing_key(tmp_path):
    store = LocalDataStore(base_path=str(tmp_path))

    with pytest.raises(FileNotFoundError, match="Key not found"):
        store.read("nce.csv")


def test_local_storage_exists_and_delete(tmp_path):
    store = LocalDataStore(base_path=str(tmp_path))

    assert not store.exists("summary.json")
    store.write("summary.json", b"{}")
    assert store.exists("summary.json")

    store.delete("summary.json")
    assert not store.exists("summary.json")
    store.delete("summary.json")


def test_local_storage_list_keys(tmp_path):
    """Keys are posix paths relative to the base, sorted."""
    store = LocalDataStore(base_path=str(tmp_path))

    store.write("study/slopes.csv", b"data1")
    store.write("study/convergence.csv", b"data2")
    store.write("gap.csv", b"data3")

    assert store.list_keys("study") == ["study/convergence.csv", "study/slopes.csv"]
    assert len(store.list_keys()) == 3
    assert store.list_keys("missing") == []


def test_get_storage_factory(tmp_path):
    store = get_storage("local", base_path=str(tmp_path))
    assert isinstance(store, LocalDataStore)
    assert store.base_path == tmp_path


def test_get_storage_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MFG_STORAGE_TYPE", "local")
    monkeypatch.setenv("MFG_OUTPUT_DIR", str(tmp_path / "out"))

    store = get_storage()
    assert store.base_path == tmp_path / "out"
    assert (tmp_path / "out").is_dir()


def test_get_storage_unknown_type():
    with pytest.raises(ValueError, match="Unknown storage type"):
        get_storage("s3")
