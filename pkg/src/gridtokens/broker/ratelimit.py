from __future__ import annotations

import math
import threading
from collections import deque


class SlidingWindowLimiter:
    """At most ``limit`` grants per key in any window of ``window`` seconds.

    Keeps the grant timestamps per key; a sliding log rather than a token
    bucket so the bound holds for every window, not just aligned ones.
    """

    def __init__(self, window: int = 60):
        self.window = window
        self._log: dict[object, deque] = {}
        self._lock = threading.Lock()

    def acquire(self, key, limit: int, now: float) -> tuple[bool, int]:
        """Returns ``(granted, retry_after_seconds)``."""
        with self._lock:
            log = self._log.setdefault(key, deque())
            while log and log[0] <= now - self.window:
                log.popleft()
            if len(log) >= limit:
                return False, max(1, math.ceil(log[0] + self.window - now))
            log.append(now)
            return True, 0

    def reset(self, match=None) -> None:
        with self._lock:
            if match is None:
                self._log.clear()
            else:
                for key in [k for k in self._log if match(k)]:
                    del self._log[key]
