"""Obtain an access token: cached, exchanged, renewed, or bootstrapped."""
from __future__ import annotations

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ..broker.client import BrokerClient
from ..broker.errors import (
    BootstrapRequired,
    BrokerError,
    BrokerUnreachable,
    ConsentDenied,
    DownscopeRefused,
    SessionExpired,
    TokenExpired,
    TokenUnknown,
)
from ..broker.secondary import SecondaryKey
from ..clock import SYSTEM_CLOCK, Clock
from ..fsutil import atomic_write
from ..profile import Scope, TokenError, covered, parse_scopes, unverified_claims
from .discovery import DEFAULT_ROLE, TokenFileLayout, default_layout, discover_bearer

log = logging.getLogger(__name__)

MIN_REMAINING = 60
POLL_INTERVAL = 5
BOOTSTRAP_TIMEOUT = 900

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_AUTH_REQUIRED = 3
EXIT_DOWNSCOPE_REFUSED = 4
EXIT_NETWORK = 5
EXIT_FILESYSTEM = 6


class ClientError(Exception):
    exit_code = EXIT_ERROR


class AuthRequired(ClientError):
    exit_code = EXIT_AUTH_REQUIRED


class ScopeRefused(ClientError):
    exit_code = EXIT_DOWNSCOPE_REFUSED


class NetworkFailure(ClientError):
    exit_code = EXIT_NETWORK


class FileWriteError(ClientError):
    exit_code = EXIT_FILESYSTEM


@dataclass(frozen=True)
class ClientOptions:
    experiment: str
    role: str | None = None
    scopes: tuple[Scope, ...] = ()
    audience: str | None = None
    out: str | None = None
    credkey: str | None = None
    broker: str | None = None
    quiet: bool = False
    verbose: bool = False

    def __post_init__(self):
        if not self.experiment:
            raise ValueError("an experiment is required")
        object.__setattr__(self, "scopes", tuple(parse_scopes([str(s) for s in self.scopes])))

    @property
    def effective_role(self) -> str:
        return self.role or DEFAULT_ROLE


@dataclass(frozen=True)
class TokenResult:
    access_token: str
    source: str  # cached | exchanged | renewed | bootstrapped
    access_path: Path | None
    broker_path: Path | None
    expires_at: int


def write_token_files(
    layout: TokenFileLayout, access_token: str | None = None, broker_token: str | None = None
) -> list[Path]:
    """Atomically write whichever tokens are given, owner-only."""
    if layout.access_path == layout.broker_path:
        raise FileWriteError("access and broker tokens must not share a file")
    written = []
    try:
        if broker_token is not None:
            written.append(atomic_write(layout.broker_path, broker_token + "\n", mode=0o600))
        if access_token is not None:
            written.append(atomic_write(layout.access_path, access_token + "\n", mode=0o600))
    except OSError as exc:
        raise FileWriteError(f"cannot write token file: {exc}") from exc
    return written


def cached_token_usable(token: str, opts: ClientOptions, now: int) -> bool:
    """A cached token is reused if it is for this experiment/role, has >60 s
    left, and covers the requested scopes and audience."""
    try:
        claims = unverified_claims(token)
    except TokenError:
        return False
    if claims.exp - now <= MIN_REMAINING:
        return False
    groups = set(claims.groups)
    if f"/{opts.experiment}" not in groups or f"/{opts.experiment}/{opts.effective_role}" not in groups:
        return False
    if not all(covered(claims.scope, s) for s in opts.scopes):
        return False
    if opts.audience and opts.audience not in claims.aud:
        return False
    return True


def _say(msg: str, stream) -> None:
    print(msg, file=stream, flush=True)


def get_token(
    opts: ClientOptions,
    broker: BrokerClient,
    env: Mapping[str, str],
    uid: int,
    clock: Clock = SYSTEM_CLOCK,
    secondary_key: SecondaryKey | None = None,
    principal: str | None = None,
    open_url: Callable[[str], None] | None = None,
    interactive: bool = True,
    poll_interval: float = POLL_INTERVAL,
    timeout: float = BOOTSTRAP_TIMEOUT,
    stderr=None,
) -> TokenResult:
    stderr = stderr or sys.stderr
    role = opts.effective_role
    principal = principal or opts.credkey or env.get("USER") or ""
    layout = default_layout(env, uid, opts.experiment, opts.role, opts.credkey, opts.out)
    scopes = [str(s) for s in opts.scopes] or None

    # 1. cached access token
    candidate = None
    if opts.out:
        if layout.access_path.is_file():
            candidate = layout.access_path.read_text().strip()
    else:
        found = discover_bearer(env, uid)
        if found is not None:
            candidate = found.read()
    if candidate and cached_token_usable(candidate, opts, clock.now()):
        log.debug("reusing cached access token")
        return TokenResult(candidate, "cached", layout.access_path, None, unverified_claims(candidate).exp)

    def finish(access: dict, source: str, broker_token: str | None = None) -> TokenResult:
        write_token_files(layout, access["access_token"], broker_token)
        return TokenResult(
            access["access_token"], source, layout.access_path,
            layout.broker_path if (broker_token or layout.broker_path.exists()) else None,
            access["expires_at"],
        )

    def exchange(broker_token: str) -> dict:
        return broker.exchange(broker_token, scopes, opts.audience)

    try:
        # 2. stored broker token
        if layout.broker_path.is_file():
            stored = layout.broker_path.read_text().strip()
            try:
                return finish(exchange(stored), "exchanged")
            except (TokenExpired, TokenUnknown, BootstrapRequired) as exc:
                log.info("stored broker token unusable (%s)", exc.code)

        # 3. secondary-assertion renewal
        if secondary_key is not None and principal:
            assertion = secondary_key.assertion(principal, opts.experiment, clock.now())
            try:
                renewed = broker.renew(assertion, opts.experiment, role)
            except BootstrapRequired as exc:
                log.info("renewal refused: %s", exc.message)
            except BrokerError as exc:
                if exc.retriable:
                    raise
                log.info("renewal failed (%s): %s", exc.code, exc.message)
            else:
                write_token_files(layout, broker_token=renewed["broker_token"])
                return finish(exchange(renewed["broker_token"]), "renewed", renewed["broker_token"])

        # 4. browser bootstrap
        if not interactive:
            raise AuthRequired("authentication required: no usable broker token and renewal was not possible")
        begin = broker.begin(principal, opts.experiment, role)
        _say(f"Complete the authentication at:\n    {begin['url']}", stderr)
        if open_url is not None:
            open_url(begin["url"])
        deadline = clock.now() + timeout
        while True:
            try:
                result = broker.poll(begin["handle"])
            except (ConsentDenied, SessionExpired) as exc:
                raise AuthRequired(f"authentication failed: {exc.message}") from None
            if result.get("status") == "complete":
                break
            if clock.now() >= deadline:
                raise AuthRequired("timed out waiting for authentication")
            clock.sleep(poll_interval)
        btok = result["broker_token"]
        write_token_files(layout, broker_token=btok)
        if scopes or opts.audience:
            access = exchange(btok)
        else:
            access = {"access_token": result["access_token"], "expires_at": result["expires_at"]}
        return finish(access, "bootstrapped", btok)

    except DownscopeRefused as exc:
        raise ScopeRefused(exc.message) from None
    except BrokerUnreachable as exc:
        raise NetworkFailure(exc.message) from None
    except BrokerError as exc:
        if exc.code in ("bootstrap_required", "token_expired", "token_unknown"):
            raise AuthRequired(exc.message) from None
        if exc.retriable:
            raise NetworkFailure(f"{exc.code}: {exc.message}") from None
        raise ClientError(f"{exc.code}: {exc.message}") from None


def parse_scope_list(values: Sequence[str] | None) -> tuple[Scope, ...]:
    out = []
    for v in values or ():
        out += [s for s in v.replace(",", " ").split() if s]
    return tuple(parse_scopes(out))
