"""Injectable clocks. Everything time-dependent takes one of these so tests can
drive weeks of token lifetimes in milliseconds."""
from __future__ import annotations

import threading
import time


class Clock:
    """Wall clock in integer epoch seconds."""

    def now(self) -> int:
        return int(time.time())

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class SimClock(Clock):
    def __init__(self, start: int = 1_700_000_000):
        self._t = int(start)
        self._lock = threading.Lock()

    def now(self) -> int:
        with self._lock:
            return self._t

    def advance(self, seconds: float) -> int:
        with self._lock:
            self._t += int(seconds)
            return self._t

    def set(self, t: int) -> None:
        with self._lock:
            self._t = int(t)

    # sleeping on a simulated clock just moves time forward
    def sleep(self, seconds: float) -> None:
        self.advance(seconds)


SYSTEM_CLOCK = Clock()
