"""The token broker: keeps refresh tokens server-side and hands out broker
tokens and short-lived access tokens in their place."""
from __future__ import annotations

import hashlib
import hmac
import logging
import secrets
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping
from urllib.parse import urlencode

import httpx

from ..clock import SYSTEM_CLOCK, Clock
from ..issuer.service import GRANT_CODE, GRANT_REFRESH, GRANT_RENEW
from ..profile import MalformedToken, format_scopes, parse_scopes, unverified_claims
from ..profile.errors import ScopeError
from .config import BrokerConfig, ChangeReport, diff, normalize
from .errors import (
    AssertionRejected,
    BootstrapRequired,
    BrokerError,
    ConfigError,
    Conflict,
    ConsentDenied,
    DownscopeRefused,
    IssuerUnreachable,
    NotFound,
    RateLimited,
    SessionExpired,
    TokenExpired,
    TokenUnknown,
    Unauthorized,
)
from .ratelimit import SlidingWindowLimiter
from .secondary import decode_public_key, verify_assertion
from .store import SealedStore

log = logging.getLogger(__name__)

MAX_SESSIONS_PER_PRINCIPAL = 5


def _digest(secret: str) -> str:
    return hashlib.sha256(secret.encode()).hexdigest()


@dataclass(frozen=True)
class RecordKey:
    """Experiment here is the broker-side issuer alias (shared issuers appear per experiment)."""

    experiment: str
    role: str
    principal: str

    def __str__(self):
        return f"{self.experiment}/{self.role}/{self.principal}"

    @classmethod
    def parse(cls, text: str) -> "RecordKey":
        experiment, role, principal = text.split("/", 2)
        return cls(experiment, role, principal)


@dataclass(frozen=True)
class BrokerToken:
    secret: str
    key: RecordKey
    issued_at: int
    expires_at: int

    def to_dict(self) -> dict:
        return {
            "broker_token": self.secret,
            "broker_token_expires_at": self.expires_at,
            "experiment": self.key.experiment,
            "role": self.key.role,
            "principal": self.key.principal,
        }


@dataclass
class _Session:
    handle: str
    state: str
    principal: str
    experiment: str
    role: str
    created: int
    expires_at: int
    code: str | None = None
    error: str | None = None


class IssuerError(BrokerError):
    status = 502
    code = "issuer_error"


class BrokerService:
    def __init__(
        self,
        config: BrokerConfig | Mapping | str,
        http: httpx.Client,
        clock: Clock = SYSTEM_CLOCK,
        store: SealedStore | None = None,
        public_url: str = "https://broker.test",
        admin_secret: str | None = None,
        resolver: Callable[[str], bool] | None = None,
    ):
        self.http = http
        self.clock = clock
        self.public_url = public_url.rstrip("/")
        self.store = store or SealedStore()
        self._resolver = resolver
        self._config = config if isinstance(config, BrokerConfig) else normalize(config, resolver)
        self._admin_digest = _digest(admin_secret) if admin_secret else None
        self._limiter = SlidingWindowLimiter(60)
        self._sessions: dict[str, _Session] = {}
        self._sessions_lock = threading.Lock()
        self._key_locks: dict[RecordKey, threading.Lock] = {}
        self._reconfig = threading.Lock()
        self.bootstrap_sessions_created = 0

    # -- helpers ---------------------------------------------------------------

    @property
    def config(self) -> BrokerConfig:
        return self._config

    @property
    def lifetimes(self):
        return self._config.lifetimes

    @property
    def callback_url(self) -> str:
        return f"{self.public_url}/v1/auth/oidc/callback"

    def _experiment(self, cfg: BrokerConfig, experiment: str, role: str | None = None) -> dict:
        entry = cfg.experiment(experiment)
        if entry is None:
            raise NotFound(f"unknown experiment {experiment!r}", code="unknown_experiment")
        if role is not None and role not in entry["roles"]:
            raise NotFound(f"unknown role {role!r} for {experiment}", code="unknown_role")
        return entry

    def _key_lock(self, key: RecordKey) -> threading.Lock:
        with self._sessions_lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def _issuer_post(self, entry: dict, form: dict) -> dict:
        form = {"client_id": entry["client_id"], "client_secret": entry["client_secret"], **form}
        try:
            resp = self.http.post(f"{entry['issuer_url']}/token", data=form)
        except httpx.TransportError as exc:
            raise IssuerUnreachable(f"issuer {entry['issuer_url']} unreachable: {type(exc).__name__}") from None
        try:
            body = resp.json()
        except ValueError:
            body = {}
        if resp.status_code >= 500:
            raise IssuerUnreachable(f"issuer returned HTTP {resp.status_code}")
        if resp.status_code != 200:
            err = body.get("error", "error")
            raise IssuerError(f"{err}: {body.get('error_description', '')}", code=f"issuer_{err}")
        return body

    def _record(self, key: RecordKey) -> dict | None:
        return self.store.data["records"].get(str(key))

    def _drop_record(self, key: RecordKey) -> None:
        with self.store.lock:
            self.store.data["records"].pop(str(key), None)
            self.store.commit()

    def _issue_broker_token(self, key: RecordKey) -> BrokerToken:
        now = self.clock.now()
        tok = BrokerToken(secrets.token_urlsafe(32), key, now, now + self.lifetimes.broker)
        with self.store.lock:
            tokens = self.store.data["tokens"]
            # forget tokens long past expiry; recently expired ones stay to report "expired"
            for digest in [d for d, t in tokens.items() if t["expires_at"] + self.lifetimes.broker < now]:
                del tokens[digest]
            tokens[_digest(tok.secret)] = {"key": str(key), "issued_at": tok.issued_at, "expires_at": tok.expires_at}
            self.store.commit()
        log.info("issued broker token for %s valid until %d", key, tok.expires_at)
        return tok

    def _store_refresh(self, key: RecordKey, handle: str, expires_in: int | None) -> None:
        now = self.clock.now()
        with self.store.lock:
            self.store.data["records"][str(key)] = {
                "refresh_handle": handle,
                "obtained_at": now,
                "last_used": now,
                "refresh_expires_at": now + int(expires_in) if expires_in else None,
            }
            self.store.commit()

    # -- bootstrap ---------------------------------------------------------------

    def bootstrap_begin(self, principal: str, experiment: str, role: str) -> dict:
        entry = self._experiment(self._config, experiment, role)
        now = self.clock.now()
        with self._sessions_lock:
            for h in [h for h, s in self._sessions.items() if s.expires_at <= now]:
                del self._sessions[h]
            live = sum(1 for s in self._sessions.values() if s.principal == principal)
            if live >= MAX_SESSIONS_PER_PRINCIPAL:
                raise RateLimited(f"{principal} already has {live} pending sessions", code="too_many_sessions")
            sess = _Session(
                handle=secrets.token_urlsafe(32),
                state=secrets.token_urlsafe(16),
                principal=principal,
                experiment=experiment,
                role=role,
                created=now,
                expires_at=now + self.lifetimes.bootstrap_session,
            )
            self._sessions[sess.handle] = sess
            self.bootstrap_sessions_created += 1
        params = {
            "response_type": "code",
            "client_id": entry["client_id"],
            "redirect_uri": self.callback_url,
            "state": sess.state,
            "role": role,
            "login_hint": principal,
        }
        if entry["issuer"] != experiment:
            params["experiment"] = experiment
        url = f"{entry['issuer_url']}/authorize?{urlencode(params)}"
        log.info("bootstrap session started for %s %s/%s", principal, experiment, role)
        return {"url": url, "handle": sess.handle, "expires_at": sess.expires_at}

    def oidc_callback(self, state: str, code: str | None = None, error: str | None = None) -> None:
        with self._sessions_lock:
            sess = next((s for s in self._sessions.values() if hmac.compare_digest(s.state, state or "")), None)
            if sess is None:
                raise NotFound("no pending session for this state", code="session_not_found")
            if code:
                sess.code = code
            else:
                sess.error = error or "access_denied"

    def bootstrap_poll(self, handle: str) -> dict:
        with self._sessions_lock:
            sess = self._sessions.get(handle)
            if sess is None:
                raise NotFound("unknown session", code="session_not_found")
            if self.clock.now() >= sess.expires_at:
                del self._sessions[handle]
                raise SessionExpired("bootstrap session expired")
            if sess.error:
                del self._sessions[handle]
                raise ConsentDenied(f"authorization failed: {sess.error}")
            if sess.code is None:
                return {"status": "pending"}
            # single poller: the session is consumed here
            del self._sessions[handle]
        entry = self._experiment(self._config, sess.experiment, sess.role)
        resp = self._issuer_post(
            entry, {"grant_type": GRANT_CODE, "code": sess.code, "redirect_uri": self.callback_url}
        )
        sub = resp.get("sub") or unverified_claims(resp["access_token"]).sub
        if sub != sess.principal:
            raise AssertionRejected(f"authenticated as {sub!r}, session was for {sess.principal!r}",
                                    code="principal_mismatch")
        key = RecordKey(sess.experiment, sess.role, sub)
        with self._key_lock(key):
            self._store_refresh(key, resp["refresh_token"], resp.get("refresh_token_expires_in"))
        tok = self._issue_broker_token(key)
        access_exp = self.clock.now() + int(resp["expires_in"])
        try:
            access_exp = unverified_claims(resp["access_token"]).exp
        except MalformedToken:
            pass
        return {"status": "complete", **tok.to_dict(), "access_token": resp["access_token"], "expires_at": access_exp}

    # -- secondary renewal -----------------------------------------------------------

    def enrolled_key(self, experiment: str, principal: str) -> str | None:
        entry = self._config.experiment(experiment) or {}
        return entry.get("secondary_keys", {}).get(principal) or self.store.data["enrollments"].get(
            f"{experiment}/{principal}"
        )

    def renew(self, assertion: dict, experiment: str, role: str) -> BrokerToken:
        cfg = self._config
        entry = self._experiment(cfg, experiment, role)
        principal = str(assertion.get("principal", ""))
        pub = self.enrolled_key(experiment, principal)
        if pub is None:
            raise AssertionRejected(f"no secondary key enrolled for {principal!r} in {experiment}")
        verify_assertion(assertion, pub, entry["realm"], self.clock.now())
        key = RecordKey(experiment, role, principal)
        with self._key_lock(key):
            rec = self._record(key)
            if rec is None:
                raise BootstrapRequired(f"no stored credential for {key}; run the browser bootstrap")
            try:
                resp = self._issuer_post(entry, {"grant_type": GRANT_RENEW, "refresh_token": rec["refresh_handle"]})
            except IssuerError as exc:
                if exc.code == "issuer_invalid_grant":
                    self._drop_record(key)
                    raise BootstrapRequired("stored refresh token is no longer valid; run the browser bootstrap") from None
                raise
            self._store_refresh(key, resp["refresh_token"], resp.get("refresh_token_expires_in"))
        log.info("renewed %s via secondary assertion", key)
        return self._issue_broker_token(key)

    # -- exchange -----------------------------------------------------------------

    def lookup(self, secret: str) -> BrokerToken:
        meta = self.store.data["tokens"].get(_digest(secret or ""))
        if meta is None:
            raise TokenUnknown("unknown broker token")
        tok = BrokerToken(secret, RecordKey.parse(meta["key"]), meta["issued_at"], meta["expires_at"])
        if self.clock.now() >= tok.expires_at:
            raise TokenExpired("broker token expired; renew it")
        return tok

    def exchange(self, secret: str, scopes: Iterable[str] | str | None = None, audience: str | None = None) -> dict:
        cfg = self._config
        tok = self.lookup(secret)
        key = tok.key
        entry = cfg.experiment(key.experiment)
        rec = self._record(key)
        if entry is None or rec is None:
            raise BootstrapRequired(f"no stored credential for {key}")
        if scopes:
            try:
                scope_text = format_scopes(parse_scopes(scopes))
            except ScopeError as exc:
                raise DownscopeRefused(str(exc), code="invalid_scope") from None
        else:
            scope_text = None
        now = self.clock.now()
        ok, retry = self._limiter.acquire((key.experiment, key.principal), entry["rate_limit"], now)
        if not ok:
            raise RateLimited(f"more than {entry['rate_limit']} exchanges per minute", retry_after=retry)
        form = {"grant_type": GRANT_REFRESH, "refresh_token": rec["refresh_handle"]}
        if scope_text:
            form["scope"] = scope_text
        if audience:
            form["audience"] = audience
        try:
            resp = self._issuer_post(entry, form)
        except IssuerError as exc:
            if exc.code == "issuer_invalid_scope":
                raise DownscopeRefused(exc.message.split(": ", 1)[-1]) from None
            if exc.code == "issuer_invalid_grant":
                self._drop_record(key)
                raise BootstrapRequired("stored refresh token is no longer valid") from None
            raise
        with self.store.lock:
            rec["last_used"] = now
        try:
            expires_at = unverified_claims(resp["access_token"]).exp
        except MalformedToken:
            expires_at = now + int(resp["expires_in"])
        return {
            "access_token": resp["access_token"],
            "token_type": "Bearer",
            "expires_in": resp["expires_in"],
            "expires_at": expires_at,
            "scope": resp.get("scope", ""),
        }

    # -- administration --------------------------------------------------------------

    def check_admin(self, credential: str | None) -> None:
        if self._admin_digest is None or not hmac.compare_digest(self._admin_digest, _digest(credential or "")):
            raise Unauthorized("admin credential required")

    def apply_config(self, document: Mapping | str | bytes) -> ChangeReport:
        new = normalize(document, self._resolver)
        with self._reconfig:
            report = diff(self._config, new)
            if not report:
                return report
            removed = {p.split("/", 1)[1] for p in report.removed if p.startswith("experiments/")}
            touched = removed | {p.split("/", 1)[1] for p in report.modified if p.startswith("experiments/")}
            self._config = new
            if removed:
                with self.store.lock:
                    for section in ("records",):
                        for k in [k for k in self.store.data[section] if RecordKey.parse(k).experiment in removed]:
                            del self.store.data[section][k]
                    tokens = self.store.data["tokens"]
                    for d in [d for d, t in tokens.items() if RecordKey.parse(t["key"]).experiment in removed]:
                        del tokens[d]
                    enroll = self.store.data["enrollments"]
                    for k in [k for k in enroll if k.split("/", 1)[0] in removed]:
                        del enroll[k]
                    self.store.commit()
            if touched:
                self._limiter.reset(lambda k: k[0] in touched)
        log.info("applied config: %s", report.to_dict())
        return report

    def store_for_robot(
        self, admin_credential: str | None, principal: str, experiment: str, role: str, grant: str, public_key: str
    ) -> RecordKey:
        self.check_admin(admin_credential)
        self._experiment(self._config, experiment, role)
        tok = self.lookup(grant)
        key = RecordKey(experiment, role, principal)
        if tok.key != key:
            raise AssertionRejected(f"grant is bound to {tok.key}, not {key}", code="grant_mismatch")
        if self._record(key) is None:
            raise BootstrapRequired(f"no stored credential for {key}")
        try:
            decode_public_key(public_key)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        with self.store.lock:
            slot = f"{experiment}/{principal}"
            if slot in self.store.data["enrollments"]:
                raise Conflict(f"robot {principal} is already enrolled for {experiment}")
            self.store.data["enrollments"][slot] = public_key
            self.store.commit()
        log.info("enrolled robot %s for %s/%s", principal, experiment, role)
        return key

    def health(self) -> dict:
        data = self._config.data
        return {
            "status": "ok",
            "experiments": len(data["experiments"]),
            "ha": {"servers": data["ha"]["servers"], "mode": "single-node"} if "ha" in data else None,
        }

    def record_summary(self) -> list[dict]:
        """Stored credentials without their secrets."""
        out = []
        for k, rec in sorted(self.store.data["records"].items()):
            out.append({"key": k, **{f: v for f, v in rec.items() if f != "refresh_handle"}})
        return out
