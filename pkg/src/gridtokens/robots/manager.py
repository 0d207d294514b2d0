"""Unattended broker-token upkeep for robot identities.

After one operator-driven bootstrap, each cycle renews a robot's broker token
with its enrolled secondary key, stores it at every credstore and pushes it to
every destination node. State lives in an append-only journal so the daemon
can be killed and restarted between any two writes.
"""
from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import httpx

from ..broker.client import BrokerClient
from ..broker.errors import BootstrapRequired, BrokerError, ConsentDenied, SessionExpired
from ..broker.secondary import SecondaryKey
from ..clock import SYSTEM_CLOCK, Clock
from ..credstore.client import CredStoreClient
from ..credstore.errors import CredStoreError
from ..fsutil import atomic_write
from ..lifetimes import DAY
from .transport import PushTransport, push_token

log = logging.getLogger(__name__)
cycle_log = logging.getLogger("gridtokens.robots.cycle")

DEFAULT_THRESHOLD = DAY
COMPACT_EVERY = 500

# robot status values
ACTIVE = "active"
OPERATOR_ACTION = "operator-action-required"


class RobotError(Exception):
    pass


class RobotExists(RobotError):
    pass


class OnboardTimeout(RobotError):
    pass


class EnrollmentFailed(RobotError):
    pass


@dataclass(frozen=True)
class Destination:
    node: str
    path: str

    def __str__(self):
        return f"{self.node}:{self.path}"


@dataclass(frozen=True)
class RobotRecord:
    name: str
    experiment: str
    role: str
    key_ref: str = ""
    credstores: tuple[str, ...] = ()
    destinations: tuple[Destination, ...] = ()
    realm: str | None = None

    def __post_init__(self):
        if not (self.name and self.experiment and self.role):
            raise ValueError("robot, experiment and role are required")
        if not self.credstores and not self.destinations:
            raise ValueError(f"robot {self.name} needs at least one credstore or destination")
        targets = [f"credstore:{u}" for u in self.credstores] + [f"node:{d}" for d in self.destinations]
        if len(set(targets)) != len(targets):
            raise ValueError(f"robot {self.name} lists a destination twice")

    @property
    def targets(self) -> list[str]:
        return [f"credstore:{u}" for u in self.credstores] + [f"node:{d}" for d in self.destinations]

    @classmethod
    def from_config(cls, doc: Mapping) -> "RobotRecord":
        try:
            dests = tuple(Destination(str(d["node"]), str(d["path"])) for d in doc.get("destinations") or ())
            return cls(
                name=str(doc.get("robot") or doc.get("name") or ""),
                experiment=str(doc.get("experiment", "")),
                role=str(doc.get("role", "")),
                key_ref=str(doc.get("key_ref", "")),
                credstores=tuple(str(u).rstrip("/") for u in doc.get("credstores") or ()),
                destinations=dests,
                realm=doc.get("realm"),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"bad robot config: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "robot": self.name,
            "experiment": self.experiment,
            "role": self.role,
            "key_ref": self.key_ref,
            "credstores": list(self.credstores),
            "destinations": [{"node": d.node, "path": d.path} for d in self.destinations],
            "realm": self.realm,
        }


@dataclass
class _RobotState:
    record: RobotRecord
    token: str | None = None
    expires_at: int = 0
    status: str = ACTIVE
    last_success: dict[str, int] = field(default_factory=dict)


@dataclass
class CycleReport:
    started: int
    robots: list[dict]

    def outcomes(self) -> list[dict]:
        return [d for r in self.robots for d in r["destinations"]]

    @property
    def ok(self) -> bool:
        return all(r["renewal"] not in ("failed", OPERATOR_ACTION) for r in self.robots) and all(
            d["ok"] for d in self.outcomes()
        )

    def to_dict(self) -> dict:
        return {"started": self.started, "robots": self.robots}


class RobotManager:
    def __init__(
        self,
        state_dir: str | os.PathLike,
        broker: BrokerClient,
        transport: PushTransport,
        clock: Clock = SYSTEM_CLOCK,
        threshold: int = DEFAULT_THRESHOLD,
        http: httpx.Client | None = None,
        credstore_factory: Callable[[str], CredStoreClient] | None = None,
    ):
        if threshold <= 0:
            raise ValueError("renewal threshold must be positive")
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(mode=0o700, parents=True, exist_ok=True)
        (self.state_dir / "keys").mkdir(mode=0o700, exist_ok=True)
        self.broker = broker
        self.transport = transport
        self.clock = clock
        self.threshold = threshold
        self._credstores = credstore_factory or (lambda url: CredStoreClient(url, http=http))
        self._robots: dict[str, _RobotState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._journal_lock = threading.Lock()
        self._entries = 0
        self._load()

    # -- persistence --------------------------------------------------------------------

    @property
    def journal_path(self) -> Path:
        return self.state_dir / "journal.jsonl"

    @property
    def snapshot_path(self) -> Path:
        return self.state_dir / "state.json"

    def _apply(self, event: dict) -> None:
        op = event["op"]
        if op == "onboard":
            rec = RobotRecord.from_config(event["record"])
            self._robots[rec.name] = _RobotState(rec)
            return
        st = self._robots.get(event["robot"])
        if st is None:
            return
        if op == "token":
            st.token, st.expires_at, st.status = event["broker_token"], event["expires_at"], ACTIVE
        elif op == "success":
            st.last_success[event["target"]] = event["at"]
        elif op == "status":
            st.status = event["status"]

    def _load(self) -> None:
        if self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text())
            for item in snap["robots"]:
                rec = RobotRecord.from_config(item["record"])
                self._robots[rec.name] = _RobotState(
                    rec, item["token"], item["expires_at"], item["status"], dict(item["last_success"])
                )
        if self.journal_path.exists():
            for line in self.journal_path.read_text().splitlines():
                try:
                    event = json.loads(line)
                except ValueError:
                    # torn final line from a kill mid-append
                    log.warning("ignoring unreadable journal line")
                    continue
                self._apply(event)
                self._entries += 1

    def _record(self, event: dict) -> None:
        with self._journal_lock:
            self._apply(event)
            fd = os.open(self.journal_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o600)
            try:
                os.write(fd, (json.dumps(event, sort_keys=True) + "\n").encode())
                os.fsync(fd)
            finally:
                os.close(fd)
            self._entries += 1
            if self._entries >= COMPACT_EVERY:
                self._compact()

    def _compact(self) -> None:
        snap = {
            "robots": [
                {
                    "record": st.record.to_dict(),
                    "token": st.token,
                    "expires_at": st.expires_at,
                    "status": st.status,
                    "last_success": st.last_success,
                }
                for st in self._robots.values()
            ]
        }
        atomic_write(self.snapshot_path, json.dumps(snap, sort_keys=True), mode=0o600)
        atomic_write(self.journal_path, b"", mode=0o600)
        self._entries = 0

    def _lock(self, name: str) -> threading.Lock:
        with self._journal_lock:
            return self._locks.setdefault(name, threading.Lock())

    # -- onboarding ----------------------------------------------------------------------

    def robots(self) -> list[RobotRecord]:
        return [st.record for st in self._robots.values()]

    def key_path(self, name: str) -> Path:
        return self.state_dir / "keys" / f"{name}.pem"

    def onboard_robot(
        self,
        config: Mapping | RobotRecord,
        admin_secret: str,
        open_url: Callable[[str], object],
        poll_interval: int = 5,
        timeout: int = 900,
    ) -> tuple[RobotRecord, CycleReport]:
        rec = config if isinstance(config, RobotRecord) else RobotRecord.from_config(config)
        if rec.name in self._robots:
            raise RobotExists(f"robot {rec.name} is already onboarded")
        begin = self.broker.begin(rec.name, rec.experiment, rec.role)
        open_url(begin["url"])
        deadline = self.clock.now() + timeout
        while True:
            try:
                status = self.broker.poll(begin["handle"])
            except SessionExpired as exc:
                raise OnboardTimeout(f"bootstrap for {rec.name} expired: {exc.message}") from None
            except ConsentDenied as exc:
                raise RobotError(f"operator denied consent for {rec.name}: {exc.message}") from None
            if status.get("status") == "complete":
                break
            if self.clock.now() >= deadline:
                raise OnboardTimeout(f"operator did not complete the bootstrap for {rec.name} within {timeout}s")
            self.clock.sleep(poll_interval)
        key = SecondaryKey.generate()
        try:
            self.broker.store_robot(
                admin_secret, rec.name, rec.experiment, rec.role, status["broker_token"], key.public_b64()
            )
        except BrokerError as exc:
            raise EnrollmentFailed(f"broker refused enrollment of {rec.name}: {exc.message}") from None
        key_ref = str(key.save(self.key_path(rec.name)))
        rec = RobotRecord(rec.name, rec.experiment, rec.role, key_ref, rec.credstores, rec.destinations, rec.realm)
        self._record({"op": "onboard", "record": rec.to_dict()})
        self._record(
            {"op": "token", "robot": rec.name, "broker_token": status["broker_token"],
             "expires_at": status["broker_token_expires_at"]}
        )
        log.info("onboarded robot %s for %s/%s", rec.name, rec.experiment, rec.role)
        return rec, self.run_cycle(robots=[rec.name])

    # -- cycles ----------------------------------------------------------------------

    def _renew(self, st: _RobotState, now: int) -> dict:
        rec = st.record
        if st.token and st.expires_at - now >= self.threshold:
            return {"outcome": "not-needed"}
        try:
            key = SecondaryKey.load(rec.key_ref or self.key_path(rec.name))
            assertion = key.assertion(rec.name, rec.realm or rec.experiment, now)
            resp = self.broker.renew(assertion, rec.experiment, rec.role)
        except BootstrapRequired as exc:
            self._record({"op": "status", "robot": rec.name, "status": OPERATOR_ACTION})
            return {"outcome": OPERATOR_ACTION, "error": exc.message}
        except BrokerError as exc:
            return {"outcome": "failed", "retriable": exc.retriable, "error": exc.message}
        except (OSError, ValueError) as exc:
            return {"outcome": "failed", "retriable": False, "error": f"secondary key: {exc}"}
        self._record(
            {"op": "token", "robot": rec.name, "broker_token": resp["broker_token"],
             "expires_at": resp["broker_token_expires_at"]}
        )
        return {"outcome": "renewed", "expires_at": st.expires_at}

    def _deliver(self, st: _RobotState, target: str, now: int) -> dict:
        rec = st.record
        out = {"robot": rec.name, "target": target, "ok": False, "at": now}
        if not st.token or st.expires_at <= now:
            out.update(retriable=False, error="no valid broker token")
            return out
        kind, _, where = target.partition(":")
        if kind == "credstore":
            try:
                self._credstores(where).store(rec.name, rec.experiment, rec.role, st.token)
            except CredStoreError as exc:
                out.update(retriable=exc.retriable, error=exc.message)
                return out
        else:
            node, _, path = where.partition(":")
            pushed = push_token(self.transport, node, path, (st.token + "\n").encode())
            if not pushed.ok:
                out.update(retriable=pushed.retriable, error=pushed.error)
                return out
            out["sha256"] = pushed.sha256
        out.update(ok=True, expires_at=st.expires_at)
        self._record({"op": "success", "robot": rec.name, "target": target, "at": now})
        return out

    def _cycle_one(self, st: _RobotState, now: int) -> dict:
        with self._lock(st.record.name):
            renewal = self._renew(st, now)
            dests = [self._deliver(st, t, now) for t in st.record.targets]
        for d in dests:
            cycle_log.info(json.dumps({**d, "renewal": renewal["outcome"]}, sort_keys=True))
        return {"robot": st.record.name, "renewal": renewal["outcome"], "renewal_detail": renewal,
                "status": st.status, "destinations": dests}

    def run_cycle(self, now: int | None = None, robots: Iterable[str] | None = None) -> CycleReport:
        now = self.clock.now() if now is None else int(now)
        names = sorted(self._robots) if robots is None else [n for n in robots if n in self._robots]
        entries = []
        for name in names:
            try:
                entries.append(self._cycle_one(self._robots[name], now))
            except Exception as exc:  # one robot never blocks the rest
                log.exception("cycle for robot %s failed", name)
                entries.append({"robot": name, "renewal": "failed", "renewal_detail": {"error": str(exc)},
                                "status": self._robots[name].status, "destinations": []})
        return CycleReport(now, entries)

    def status(self) -> list[dict]:
        now = self.clock.now()
        return [
            {
                **st.record.to_dict(),
                "status": st.status,
                "broker_token_expires_at": st.expires_at,
                "remaining": max(0, st.expires_at - now),
                "last_success": dict(st.last_success),
            }
            for st in sorted(self._robots.values(), key=lambda s: s.record.name)
        ]
