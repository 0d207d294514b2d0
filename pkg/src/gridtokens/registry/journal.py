"""Append-only change journal plus periodic snapshots."""
from __future__ import annotations

import json
import threading
from pathlib import Path

from ..fsutil import atomic_write
from .state import (
    Change,
    RegistryState,
    apply_change,
    change_from_dict,
    change_to_dict,
    state_from_dict,
    state_to_dict,
)


class Registry:
    """Single-writer registry service with optional on-disk journal.

    ``state`` always returns an immutable snapshot; ``apply`` serialises writers.
    """

    def __init__(self, directory: str | Path | None = None, snapshot_every: int = 100):
        self._lock = threading.Lock()
        self._dir = Path(directory) if directory else None
        self._snapshot_every = snapshot_every
        self._state = RegistryState()
        if self._dir:
            self._dir.mkdir(parents=True, exist_ok=True)
            self._state = self._load()

    @property
    def journal_path(self) -> Path | None:
        return self._dir / "journal.jsonl" if self._dir else None

    @property
    def snapshot_path(self) -> Path | None:
        return self._dir / "snapshot.json" if self._dir else None

    @property
    def state(self) -> RegistryState:
        return self._state

    def apply(self, change: Change) -> RegistryState:
        with self._lock:
            new = apply_change(self._state, change)
            if self._dir:
                with open(self.journal_path, "a") as fh:
                    fh.write(json.dumps({"serial": new.serial, **change_to_dict(change)}, sort_keys=True) + "\n")
                if new.serial % self._snapshot_every == 0:
                    self.snapshot(new)
            self._state = new
            return new

    def snapshot(self, state: RegistryState | None = None) -> None:
        atomic_write(self.snapshot_path, json.dumps(state_to_dict(state or self._state), sort_keys=True), mode=0o644)

    def _load(self) -> RegistryState:
        state = RegistryState()
        if self.snapshot_path.exists():
            state = state_from_dict(json.loads(self.snapshot_path.read_text()))
        if self.journal_path.exists():
            for line in self.journal_path.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                serial = entry.pop("serial")
                if serial <= state.serial:
                    continue
                state = apply_change(state, change_from_dict(entry))
                if state.serial != serial:
                    raise RuntimeError(f"journal out of sequence at serial {serial}")
        return state
