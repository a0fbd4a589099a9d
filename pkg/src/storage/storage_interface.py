"""
Storage Interface - Artifact Store Abstraction
==============================================

Every CSV, summary and error record produced by the harness goes through a
`DataStore`, so callers never touch paths directly. The local backend lays
keys out as files under a base directory:

    <base>/riccati.csv
    <base>/study/convergence.csv

Design Pattern: Strategy Pattern + Dependency Injection
"""

import os
from pathlib import Path
from typing import List, Optional, Protocol

from loguru import logger

DEFAULT_OUTPUT_DIR = "./results"


class DataStore(Protocol):
    """
    Storage contract for run artifacts.

    Using Protocol (structural subtyping) instead of ABC for flexibility.
    """

    def read(self, key: str) -> bytes:
        """Read data from storage."""
        ...

    def write(self, key: str, data: bytes) -> None:
        """Write data to storage."""
        ...

    def exists(self, key: str) -> bool:
        """Check if key exists in storage."""
        ...

    def list_keys(self, prefix: str = "") -> List[str]:
        """List all keys with given prefix."""
        ...

    def delete(self, key: str) -> None:
        """Delete key from storage."""
        ...


class LocalDataStore:
    """
    Local filesystem storage.

    Example:
        store = LocalDataStore(base_path="./results")
        store.write("nce.csv", frame.write_csv().encode())
        data = store.read("nce.csv")
    """

    def __init__(self, base_path: str = DEFAULT_OUTPUT_DIR):
        self.base_path = Path(base_path)
        self.base_path.mkdir(parents=True, exist_ok=True)
        logger.debug(f"LocalDataStore initialized at: {self.base_path.absolute()}")

    def read(self, key: str) -> bytes:
        file_path = self.base_path / key

        if not file_path.exists():
            raise FileNotFoundError(f"Key not found: {key}")

        return file_path.read_bytes()

    def write(self, key: str, data: bytes) -> None:
        file_path = self.base_path / key
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_bytes(data)
        logger.info(f"Wrote: {key} ({len(data):,} bytes)")

    def exists(self, key: str) -> bool:
        return (self.base_path / key).exists()

    def list_keys(self, prefix: str = "") -> List[str]:
        """All files under the prefix, relative to the base, sorted."""
        search_path = self.base_path / prefix

        if not search_path.exists():
            return []

        keys = []
        for path in search_path.rglob("*"):
            if path.is_file():
                keys.append(path.relative_to(self.base_path).as_posix())

        return sorted(keys)

    def delete(self, key: str) -> None:
        file_path = self.base_path / key

        if file_path.exists():
            file_path.unlink()
            logger.info(f"Deleted: {key}")


def get_storage(storage_type: Optional[str] = None, base_path: Optional[str] = None) -> DataStore:
    """
    Factory function to get the artifact store.

    Args:
        storage_type: only "local" is supported. If None, reads MFG_STORAGE_TYPE.
        base_path: output directory. If None, reads MFG_OUTPUT_DIR (default ./results).

    Environment Variables:
        MFG_STORAGE_TYPE: "local" (default: "local")
        MFG_OUTPUT_DIR: base directory for local storage
    """
    if storage_type is None:
        storage_type = os.getenv("MFG_STORAGE_TYPE", "local")

    if storage_type == "local":
        if base_path is None:
            base_path = os.getenv("MFG_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)
        return LocalDataStore(base_path=base_path)

    raise ValueError(f"Unknown storage type: {storage_type}. Must be 'local'")
