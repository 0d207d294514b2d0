"""Push transports place a broker-token file on a robot's node.

``LocalDirectoryTransport`` maps node ids to local directories and is the
reference implementation. An ssh/rsync transport would implement the same
``place`` method, raising ``PushError`` with ``retriable=True`` for connection
problems and ``retriable=False`` for permission or path errors.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path, PurePosixPath
from typing import Mapping, Protocol

from ..fsutil import atomic_write


class PushError(Exception):
    def __init__(self, message: str, retriable: bool):
        super().__init__(message)
        self.retriable = retriable


class PushTransport(Protocol):
    def place(self, node: str, path: str, data: bytes) -> None:
        """Atomically make ``path`` on ``node`` hold exactly ``data`` (owner-only)."""


class LocalDirectoryTransport:
    def __init__(self, roots: Mapping[str, str | os.PathLike]):
        self.roots = {node: Path(root) for node, root in roots.items()}
        self.unreachable: set[str] = set()

    def resolve(self, node: str, path: str) -> Path:
        root = self.roots.get(node)
        if root is None:
            raise PushError(f"no route to node {node!r}", retriable=False)
        rel = PurePosixPath(path)
        if rel.is_absolute():
            rel = rel.relative_to("/")
        if ".." in rel.parts or not rel.parts:
            raise PushError(f"bad destination path {path!r}", retriable=False)
        return root.joinpath(*rel.parts)

    def place(self, node: str, path: str, data: bytes) -> None:
        target = self.resolve(node, path)
        if node in self.unreachable or not self.roots[node].is_dir():
            raise PushError(f"node {node!r} unreachable", retriable=True)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            atomic_write(target, data, mode=0o600)
        except PermissionError as exc:
            raise PushError(f"permission denied on {node}:{path}: {exc.strerror}", retriable=False) from None
        except OSError as exc:
            raise PushError(f"write failed on {node}:{path}: {exc.strerror}", retriable=True) from None


@dataclass(frozen=True)
class PushOutcome:
    node: str
    path: str
    ok: bool
    sha256: str | None = None
    retriable: bool | None = None
    error: str | None = None


def push_token(transport: PushTransport, node: str, path: str, token: bytes) -> PushOutcome:
    try:
        transport.place(node, path, token)
    except PushError as exc:
        return PushOutcome(node, path, False, retriable=exc.retriable, error=str(exc))
    return PushOutcome(node, path, True, sha256=hashlib.sha256(token).hexdigest())
