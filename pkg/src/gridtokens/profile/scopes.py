"""WLCG-profile scopes: ``authz`` or ``authz:/path`` with path-prefix semantics."""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable

from .errors import DownscopeRefused, MalformedPath, ScopeError, UnknownAuthz

COMPUTE_AUTHZ = frozenset({"compute.create", "compute.read", "compute.modify", "compute.cancel"})
STORAGE_AUTHZ = frozenset({"storage.read", "storage.create", "storage.modify"})
KNOWN_AUTHZ = COMPUTE_AUTHZ | STORAGE_AUTHZ


def _segments(path: str) -> list[str]:
    # "/" is the root and has no segments
    return [] if path == "/" else path[1:].split("/")


def _check_path(path: str) -> None:
    if not path.startswith("/"):
        raise MalformedPath(f"scope path must be absolute: {path!r}")
    for seg in _segments(path):
        if seg in ("", ".", ".."):
            raise MalformedPath(f"scope path has an empty, '.' or '..' segment: {path!r}")


@functools.total_ordering
@dataclass(frozen=True)
class Scope:
    authz: str
    path: str | None = None

    def __post_init__(self):
        if self.authz not in KNOWN_AUTHZ:
            raise UnknownAuthz(f"unknown scope name {self.authz!r}")
        if self.path is not None:
            if self.authz in COMPUTE_AUTHZ:
                raise MalformedPath(f"{self.authz} does not take a path")
            _check_path(self.path)

    def __str__(self):
        return self.authz if self.path is None else f"{self.authz}:{self.path}"

    def __lt__(self, other):
        if not isinstance(other, Scope):
            return NotImplemented
        # a pathless scope sorts before any pathed one with the same name
        return (self.authz, self.path is not None, self.path or "") < (
            other.authz, other.path is not None, other.path or "")


def parse_scope(text: str) -> Scope:
    if not text:
        raise ScopeError("empty scope string")
    authz, sep, path = text.partition(":")
    if authz not in KNOWN_AUTHZ:
        raise UnknownAuthz(f"unknown scope name {authz!r}")
    if not sep:
        return Scope(authz)
    return Scope(authz, path)


def parse_scopes(items: Iterable[str] | str) -> list[Scope]:
    """Parse a space-separated string or an iterable of scope strings."""
    if isinstance(items, str):
        items = items.split()
    return [parse_scope(s) for s in items]


def subsumes(granted: Scope, requested: Scope) -> bool:
    if granted.authz != requested.authz:
        return False
    if granted.path is None or requested.path is None:
        return granted.path is None and requested.path is None
    g = _segments(granted.path)
    return _segments(requested.path)[: len(g)] == g


def covered(granted: Iterable[Scope], requested: Scope) -> bool:
    return any(subsumes(g, requested) for g in granted)


def downscope(granted: Iterable[Scope], requested: Iterable[Scope]) -> list[Scope]:
    """Reduce ``granted`` to ``requested``.

    An empty request means no reduction. Raises ``DownscopeRefused`` naming the
    first requested scope that no granted scope covers.
    """
    granted = list(dict.fromkeys(granted))
    requested = list(dict.fromkeys(requested))
    if not requested:
        return granted
    for r in requested:
        if not covered(granted, r):
            raise DownscopeRefused(r)
    return requested


def format_scopes(scopes: Iterable[Scope]) -> str:
    return " ".join(str(s) for s in scopes)
