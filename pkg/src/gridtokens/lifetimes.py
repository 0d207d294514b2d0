"""The single table of credential lifetimes shared by issuer, broker and clients."""
from __future__ import annotations

from dataclasses import dataclass

HOUR = 3600
DAY = 24 * HOUR
WEEK = 7 * DAY


@dataclass(frozen=True)
class Lifetimes:
    access: int = 3 * HOUR
    broker: int = WEEK
    refresh: int = 4 * WEEK
    auth_code: int = 600
    bootstrap_session: int = 900

    def __post_init__(self):
        if not (self.refresh > self.broker > self.access > 0):
            raise ValueError(
                "lifetimes must satisfy refresh > broker > access > 0, got "
                f"refresh={self.refresh} broker={self.broker} access={self.access}"
            )
        if self.auth_code <= 0 or self.bootstrap_session <= 0:
            raise ValueError("auth_code and bootstrap_session lifetimes must be positive")

    @classmethod
    def from_mapping(cls, data: dict | None) -> "Lifetimes":
        if not data:
            return cls()
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown lifetime keys: {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in data.items()})


DEFAULT_LIFETIMES = Lifetimes()
