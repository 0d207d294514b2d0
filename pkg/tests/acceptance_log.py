"""Results shared between the acceptance tests and the terminal summary hook."""
from pathlib import Path

RESULTS: dict[int, tuple[bool, str]] = {}
SESSION_LOG: list[Path] = []
ALL_ISSUERS: list = []  # every IssuerService created during the session


class criterion:
    """Record PASS/FAIL for one acceptance criterion around a block of checks."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        detail = "; ".join(self.details)
        if not ok:
            detail = f"{detail}; {exc_type.__name__}: {exc}".lstrip("; ")
        line = f"{self.title}" + (f" ({detail})" if detail else "")
        RESULTS[self.number] = (ok, line)
        print(f"criterion {self.number}: {'PASS' if ok else 'FAIL'}  {line}")
        return False
