"""Credential store: holds broker tokens for job owners and keeps a fresh
access token in every registered job sandbox."""
from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..broker.client import BrokerClient
from ..broker.errors import (
    BootstrapRequired,
    BrokerError,
    BrokerUnreachable,
    DownscopeRefused,
    TokenExpired,
    TokenUnknown,
)
from ..clock import SYSTEM_CLOCK, Clock
from ..fsutil import atomic_write
from ..lifetimes import DEFAULT_LIFETIMES
from ..profile import parse_scopes
from ..profile.errors import ScopeError
from .errors import ExchangeFailed, InvalidCredential, InvalidRegistration, NoCredential, ScopeRefused

log = logging.getLogger(__name__)

SANDBOX_TOKEN = "bt_token"
DEFAULT_LEAD = 600
DEFAULT_CYCLE_PERIOD = 300

# report actions
REFRESHED = "refreshed"
NONE = "none"
NEEDS_RENEWAL = "needs-renewal"
FAILED = "failed"


@dataclass(frozen=True)
class StoredCredential:
    owner: str
    experiment: str
    role: str
    broker_token: str
    stored_at: int

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.owner, self.experiment, self.role)


@dataclass
class JobRegistration:
    job_id: str
    owner: str
    experiment: str
    role: str
    sandbox: Path
    scopes: tuple[str, ...] = ()
    audience: str | None = None
    lead: int | None = None
    expires_at: int = field(default=0, compare=False)

    def __post_init__(self):
        self.sandbox = Path(self.sandbox)

    @property
    def credential_key(self) -> tuple[str, str, str]:
        return (self.owner, self.experiment, self.role)

    @property
    def token_path(self) -> Path:
        return self.sandbox / SANDBOX_TOKEN

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "owner": self.owner,
            "experiment": self.experiment,
            "role": self.role,
            "sandbox": str(self.sandbox),
            "scopes": list(self.scopes),
            "audience": self.audience,
            "lead": self.lead,
            "expires_at": self.expires_at,
        }


class CredStore:
    def __init__(
        self,
        broker: BrokerClient,
        clock: Clock = SYSTEM_CLOCK,
        lead: int = DEFAULT_LEAD,
        cycle_period: int = DEFAULT_CYCLE_PERIOD,
        access_lifetime: int = DEFAULT_LIFETIMES.access,
        sandbox_root: str | os.PathLike | None = None,
    ):
        if cycle_period <= 0:
            raise ValueError("cycle period must be positive")
        if not cycle_period < lead < access_lifetime:
            raise ValueError(
                f"lead time {lead}s must exceed the cycle period ({cycle_period}s) "
                f"and stay below the access-token lifetime ({access_lifetime}s)"
            )
        self.broker = broker
        self.clock = clock
        self.lead = lead
        self.cycle_period = cycle_period
        self.access_lifetime = access_lifetime
        self.sandbox_root = Path(sandbox_root).resolve() if sandbox_root else None
        self._creds: dict[tuple[str, str, str], StoredCredential] = {}
        self._jobs: dict[str, JobRegistration] = {}
        self._lock = threading.Lock()
        self._job_locks: dict[str, threading.Lock] = {}
        self.last_report: dict | None = None

    # -- credentials ---------------------------------------------------------------

    def store_credential(self, owner: str, experiment: str, role: str, broker_token: str) -> dict:
        if not (owner and experiment and role and broker_token):
            raise InvalidCredential("owner, experiment, role and broker token are required")
        # no introspection endpoint exists, so a probe exchange validates the token
        try:
            self.broker.exchange(broker_token)
        except (TokenExpired, TokenUnknown, BootstrapRequired) as exc:
            raise InvalidCredential(f"broker rejected the token: {exc.message}") from None
        except BrokerError as exc:
            raise ExchangeFailed(f"cannot validate broker token: {exc.message}", retriable=exc.retriable) from None
        cred = StoredCredential(owner, experiment, role, broker_token, self.clock.now())
        with self._lock:
            replaced = cred.key in self._creds
            self._creds[cred.key] = cred
        log.info("stored credential for %s/%s/%s (replaced=%s)", owner, experiment, role, replaced)
        return {"replaced": replaced, "stored_at": cred.stored_at}

    def credential(self, owner: str, experiment: str, role: str) -> StoredCredential | None:
        return self._creds.get((owner, experiment, role))

    # -- jobs ----------------------------------------------------------------------------

    def _validate(self, reg: JobRegistration) -> None:
        lead = self.lead if reg.lead is None else reg.lead
        if not 0 < lead < self.access_lifetime:
            raise InvalidRegistration(f"lead time must be in (0, {self.access_lifetime})")
        sandbox = Path(reg.sandbox)
        if not sandbox.is_dir():
            raise InvalidRegistration(f"sandbox {sandbox} does not exist")
        if not os.access(sandbox, os.W_OK):
            raise InvalidRegistration(f"sandbox {sandbox} is not writable")
        if self.sandbox_root is not None and not sandbox.resolve().is_relative_to(self.sandbox_root):
            raise InvalidRegistration(f"sandbox {sandbox} is outside {self.sandbox_root}")
        try:
            reg.scopes = tuple(str(s) for s in parse_scopes(reg.scopes))
        except ScopeError as exc:
            raise InvalidRegistration(str(exc)) from None

    def _job_lock(self, job_id: str) -> threading.Lock:
        with self._lock:
            return self._job_locks.setdefault(job_id, threading.Lock())

    def _materialize(self, reg: JobRegistration) -> int:
        cred = self.credential(*reg.credential_key)
        if cred is None:
            raise NoCredential(f"no stored credential for {reg.owner}/{reg.experiment}/{reg.role}")
        resp = self.broker.exchange(cred.broker_token, reg.scopes or None, reg.audience)
        atomic_write(reg.token_path, resp["access_token"] + "\n", mode=0o600)
        reg.expires_at = int(resp["expires_at"])
        return reg.expires_at

    def attach_job(self, reg: JobRegistration) -> dict:
        self._validate(reg)
        with self._job_lock(reg.job_id):
            try:
                self._materialize(reg)
            except DownscopeRefused as exc:
                raise ScopeRefused(exc.message) from None
            except (TokenExpired, TokenUnknown, BootstrapRequired) as exc:
                raise InvalidCredential(f"stored broker token no longer usable: {exc.message}") from None
            except BrokerError as exc:
                raise ExchangeFailed(exc.message, retriable=exc.retriable) from None
            with self._lock:
                self._jobs[reg.job_id] = reg
        log.info("attached job %s (%s/%s)", reg.job_id, reg.experiment, reg.role)
        return {"job_id": reg.job_id, "token_file": str(reg.token_path), "expires_at": reg.expires_at}

    def detach_job(self, job_id: str) -> None:
        with self._lock:
            self._jobs.pop(job_id, None)

    def jobs(self) -> list[JobRegistration]:
        with self._lock:
            return list(self._jobs.values())

    # -- refresh ---------------------------------------------------------------------

    def _refresh_one(self, reg: JobRegistration, now: int) -> dict:
        entry = {"job_id": reg.job_id, "action": NONE, "expires_at": reg.expires_at}
        lead = self.lead if reg.lead is None else reg.lead
        if reg.expires_at - now > lead:
            return entry
        with self._job_lock(reg.job_id):
            try:
                entry["expires_at"] = self._materialize(reg)
                entry["action"] = REFRESHED
            except NoCredential:
                entry.update(action=NEEDS_RENEWAL, reason="no-credential")
            except (TokenExpired, TokenUnknown, BootstrapRequired):
                entry.update(action=NEEDS_RENEWAL, reason="broker-token-expired")
            except BrokerUnreachable:
                entry.update(action=NEEDS_RENEWAL, reason="broker-unreachable")
            except Exception as exc:  # isolate every job from its neighbours
                entry.update(action=FAILED, reason=f"{type(exc).__name__}: {exc}")
        if entry["action"] != REFRESHED:
            log.warning("job %s: %s (%s)", reg.job_id, entry["action"], entry.get("reason"))
        return entry

    def refresh_cycle(self, now: int | None = None, jobs: Iterable[str] | None = None) -> dict:
        now = self.clock.now() if now is None else int(now)
        selected = self.jobs() if jobs is None else [j for j in self.jobs() if j.job_id in set(jobs)]
        entries = [self._refresh_one(reg, now) for reg in sorted(selected, key=lambda r: r.job_id)]
        report = {"now": now, "jobs": entries}
        self.last_report = report
        return report

    def report(self) -> dict:
        return {
            "lead": self.lead,
            "cycle_period": self.cycle_period,
            "credentials": [
                {"owner": c.owner, "experiment": c.experiment, "role": c.role, "stored_at": c.stored_at}
                for c in sorted(self._creds.values(), key=lambda c: c.key)
            ],
            "jobs": [j.to_dict() for j in sorted(self.jobs(), key=lambda j: j.job_id)],
            "last_cycle": self.last_report,
        }
