"""Bearer token discovery and on-disk token layout.

Discovery order (WLCG bearer token discovery):

1. ``BEARER_TOKEN`` holds the token itself.
2. ``BEARER_TOKEN_FILE`` names a file holding the token.
3. ``$XDG_RUNTIME_DIR/bt_u{uid}``.
4. ``/tmp/bt_u{uid}`` (``$TMPDIR`` if set).

Broker tokens live in ``$GETTOKEN_CREDDIR`` (default: the temp dir) as
``vt_u{uid}-{experiment}[-{role}][-{credkey}]``; the role suffix is left off
for the default role.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

DEFAULT_ROLE = "analysis"


@dataclass(frozen=True)
class BearerLocation:
    source: str  # "BEARER_TOKEN", "BEARER_TOKEN_FILE", "runtime-dir", "temp-dir"
    token: str | None = None
    path: Path | None = None

    def read(self) -> str:
        if self.token is not None:
            return self.token.strip()
        return self.path.read_text().strip()


def _tmpdir(env: Mapping[str, str]) -> Path:
    return Path(env.get("TMPDIR") or "/tmp")


def discover_bearer(env: Mapping[str, str], uid: int) -> BearerLocation | None:
    if env.get("BEARER_TOKEN", "").strip():
        return BearerLocation("BEARER_TOKEN", token=env["BEARER_TOKEN"])
    if env.get("BEARER_TOKEN_FILE"):
        path = Path(env["BEARER_TOKEN_FILE"])
        if path.is_file():
            return BearerLocation("BEARER_TOKEN_FILE", path=path)
    if env.get("XDG_RUNTIME_DIR"):
        path = Path(env["XDG_RUNTIME_DIR"]) / f"bt_u{uid}"
        if path.is_file():
            return BearerLocation("runtime-dir", path=path)
    path = _tmpdir(env) / f"bt_u{uid}"
    if path.is_file():
        return BearerLocation("temp-dir", path=path)
    return None


@dataclass(frozen=True)
class TokenFileLayout:
    access_path: Path
    broker_path: Path


def broker_token_name(uid: int, experiment: str, role: str | None = None, credkey: str | None = None) -> str:
    name = f"vt_u{uid}-{experiment}"
    if role and role != DEFAULT_ROLE:
        name += f"-{role}"
    if credkey:
        name += f"-{credkey}"
    return name


def default_layout(
    env: Mapping[str, str],
    uid: int,
    experiment: str,
    role: str | None = None,
    credkey: str | None = None,
    out: str | os.PathLike | None = None,
) -> TokenFileLayout:
    if out:
        access = Path(out)
    elif env.get("BEARER_TOKEN_FILE"):
        access = Path(env["BEARER_TOKEN_FILE"])
    elif env.get("XDG_RUNTIME_DIR"):
        access = Path(env["XDG_RUNTIME_DIR"]) / f"bt_u{uid}"
    else:
        access = _tmpdir(env) / f"bt_u{uid}"
    creddir = Path(env.get("GETTOKEN_CREDDIR") or _tmpdir(env))
    return TokenFileLayout(access, creddir / broker_token_name(uid, experiment, role, credkey))
