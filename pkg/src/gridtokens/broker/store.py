"""Encrypted-at-rest key/value store for refresh tokens and broker state."""
from __future__ import annotations

import json
import threading
from pathlib import Path

from cryptography.fernet import Fernet, InvalidToken

from ..fsutil import atomic_write

SECTIONS = ("records", "tokens", "enrollments")


class SealedStore:
    """Sections of JSON data, sealed with a Fernet master key.

    With no path the store lives in memory only. ``commit`` rewrites the file
    only when the content actually changed, so untouched secrets stay
    byte-identical on disk.
    """

    def __init__(self, path: str | Path | None = None, master_key: bytes | None = None):
        self.path = Path(path) if path else None
        if self.path is not None and master_key is None:
            raise ValueError("a master key is required for an on-disk store")
        self._fernet = Fernet(master_key) if master_key else None
        self._lock = threading.RLock()
        self.data: dict[str, dict] = {s: {} for s in SECTIONS}
        self._written = self._serialize()
        if self.path is not None and self.path.exists():
            try:
                plain = self._fernet.decrypt(self.path.read_bytes())
            except InvalidToken:
                raise ValueError(f"cannot unseal {self.path}: wrong master key or corrupt file") from None
            loaded = json.loads(plain)
            self.data = {s: dict(loaded.get(s, {})) for s in SECTIONS}
            self._written = self._serialize()

    @staticmethod
    def generate_key() -> bytes:
        return Fernet.generate_key()

    @property
    def lock(self):
        return self._lock

    def _serialize(self) -> bytes:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()

    def commit(self) -> bool:
        with self._lock:
            current = self._serialize()
            if current == self._written:
                return False
            if self.path is not None:
                atomic_write(self.path, self._fernet.encrypt(current), mode=0o600)
            self._written = current
            return True
