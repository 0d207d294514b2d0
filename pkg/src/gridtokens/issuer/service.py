"""Mock OIDC token issuer: authorization codes, refresh tokens, signed access tokens.

One ``IssuerService`` hosts every issuer named in the generated issuer config
(the dedicated ones plus the shared one), each with its own signing keys and
client registrations.
"""
from __future__ import annotations

import hmac
import logging
import secrets
import threading
import uuid
from dataclasses import dataclass, field

from ..clock import SYSTEM_CLOCK, Clock
from ..lifetimes import DEFAULT_LIFETIMES, Lifetimes
from ..profile import (
    ANY_AUDIENCE,
    ClaimSet,
    DownscopeRefused,
    KeySet,
    Scope,
    ScopeError,
    SigningKey,
    downscope,
    format_scopes,
    mint,
    parse_scope,
    parse_scopes,
)
from ..registry import DirectoryDocument, GeneratedConfig

log = logging.getLogger(__name__)

GRANT_CODE = "authorization_code"
GRANT_REFRESH = "refresh_token"
# extension grant: rotate a refresh token and extend its lifetime
GRANT_RENEW = "urn:x-gridtokens:grant-type:refresh-renewal"


class OAuthError(Exception):
    """Error in the OAuth2 ``{"error", "error_description"}`` shape."""

    def __init__(self, error: str, description: str = "", status: int = 400):
        super().__init__(f"{error}: {description}")
        self.error = error
        self.description = description
        self.status = status

    def to_dict(self) -> dict:
        return {"error": self.error, "error_description": self.description}


class UnknownIssuer(OAuthError):
    def __init__(self, name):
        super().__init__("not_found", f"unknown issuer {name!r}", 404)


@dataclass(frozen=True)
class ClientRegistration:
    client_id: str
    client_secret: str
    issuer: str


@dataclass(frozen=True)
class RefreshTokenRecord:
    handle: str = field(repr=False)
    principal: str
    issuer: str
    experiment: str
    role: str
    scopes: tuple[Scope, ...]
    issued_at: int
    expires_at: int
    client_id: str
    renewable: bool = True


@dataclass
class AuthCodeRecord:
    code: str = field(repr=False)
    principal: str
    issuer: str
    experiment: str
    role: str
    scopes: tuple[Scope, ...]
    client_id: str
    redirect_uri: str | None
    expires_at: int
    redeemed: bool = False


@dataclass
class _Issuer:
    name: str
    url: str
    experiments: dict
    signing: SigningKey
    keys: KeySet


class IssuerService:
    def __init__(
        self,
        issuers: dict | GeneratedConfig,
        directory: DirectoryDocument,
        clock: Clock = SYSTEM_CLOCK,
        lifetimes: Lifetimes = DEFAULT_LIFETIMES,
        alg: str = "ES256",
        auto_approve: bool = False,
    ):
        if isinstance(issuers, GeneratedConfig):
            issuers = issuers.issuers
        self.clock = clock
        self.lifetimes = lifetimes
        self.alg = alg
        self.auto_approve = auto_approve
        self.directory = directory
        self._lock = threading.RLock()
        self._issuers: dict[str, _Issuer] = {}
        self._clients: dict[tuple[str, str], ClientRegistration] = {}
        self._codes: dict[str, AuthCodeRecord] = {}
        self._refresh: dict[str, RefreshTokenRecord] = {}
        self._issued_handles: list[str] = []
        self._jti = 0
        self.update(issuers=issuers)

    # -- configuration ------------------------------------------------------

    def update(self, issuers: dict | None = None, directory: DirectoryDocument | None = None) -> None:
        """Apply regenerated registry output; existing keys and clients survive."""
        with self._lock:
            if directory is not None:
                self.directory = directory
            if issuers is None:
                return
            for name, cfg in issuers.items():
                current = self._issuers.get(name)
                if current is None:
                    key = SigningKey.generate(self.alg)
                    self._issuers[name] = _Issuer(name, cfg["url"], cfg["experiments"], key, KeySet([key.public()]))
                else:
                    current.url = cfg["url"]
                    current.experiments = cfg["experiments"]
            for name in set(self._issuers) - set(issuers):
                del self._issuers[name]

    @property
    def issuer_names(self) -> list[str]:
        return sorted(self._issuers)

    def _get(self, name: str) -> _Issuer:
        try:
            return self._issuers[name]
        except KeyError:
            raise UnknownIssuer(name) from None

    def url(self, name: str) -> str:
        return self._get(name).url

    def register_client(self, issuer: str, client_id: str, client_secret: str | None = None) -> ClientRegistration:
        self._get(issuer)
        secret = client_secret or secrets.token_hex(32)
        if len(secret) < 64:
            raise ValueError("client secret must encode at least 32 random bytes")
        reg = ClientRegistration(client_id, secret, issuer)
        with self._lock:
            if (client_id, issuer) in self._clients:
                raise ValueError(f"client {client_id!r} already registered for {issuer!r}")
            self._clients[(client_id, issuer)] = reg
        return reg

    def rotate_key(self, issuer: str) -> str:
        with self._lock:
            iss = self._get(issuer)
            key = SigningKey.generate(self.alg)
            iss.keys = iss.keys.with_key(key.public())
            iss.signing = key
            return key.kid

    # -- read endpoints -----------------------------------------------------

    def discovery(self, issuer: str) -> dict:
        url = self._get(issuer).url
        return {
            "issuer": url,
            "authorization_endpoint": f"{url}/authorize",
            "token_endpoint": f"{url}/token",
            "jwks_uri": f"{url}/jwks",
            "grant_types_supported": [GRANT_CODE, GRANT_REFRESH, GRANT_RENEW],
            "response_types_supported": ["code"],
            "id_token_signing_alg_values_supported": [self.alg],
            "scopes_supported": sorted(
                {s for e in self._get(issuer).experiments.values() for r in e["roles"].values() for s in r}
            ),
        }

    def jwks(self, issuer: str) -> KeySet:
        return self._get(issuer).keys

    # -- authorization ------------------------------------------------------

    def _client(self, issuer: str, client_id: str, client_secret: str | None = None) -> ClientRegistration:
        reg = self._clients.get((client_id, issuer))
        if reg is None:
            raise OAuthError("invalid_client", f"client {client_id!r} is not registered with {issuer}", 401)
        if client_secret is not None and not hmac.compare_digest(reg.client_secret, client_secret):
            raise OAuthError("invalid_client", "client authentication failed", 401)
        return reg

    def _role_scopes(self, iss: _Issuer, experiment: str, role: str) -> tuple[Scope, ...]:
        exp = iss.experiments.get(experiment)
        if exp is None:
            raise OAuthError("invalid_request", f"{experiment!r} is not served by issuer {iss.name}")
        if role not in exp["roles"]:
            raise OAuthError("invalid_scope", f"no role {role!r} in {experiment}")
        return tuple(parse_scope(s) for s in exp["roles"][role])

    def authorize(
        self,
        issuer: str,
        client_id: str,
        role: str,
        principal: str,
        approve: bool = True,
        experiment: str | None = None,
        redirect_uri: str | None = None,
    ) -> AuthCodeRecord:
        iss = self._get(issuer)
        self._client(issuer, client_id)
        experiment = experiment or issuer
        scopes = self._role_scopes(iss, experiment, role)
        if (experiment, role) not in self.directory.roles_of(principal):
            raise OAuthError("access_denied", f"{principal} does not hold {experiment}/{role}", 403)
        if not approve:
            raise OAuthError("access_denied", "consent denied", 403)
        rec = AuthCodeRecord(
            code=secrets.token_urlsafe(32),
            principal=principal,
            issuer=issuer,
            experiment=experiment,
            role=role,
            scopes=scopes,
            client_id=client_id,
            redirect_uri=redirect_uri,
            expires_at=self.clock.now() + self.lifetimes.auth_code,
        )
        with self._lock:
            self._codes[rec.code] = rec
        log.info("issued authorization code for %s %s/%s via %s", principal, experiment, role, issuer)
        return rec

    # -- token endpoint -----------------------------------------------------

    def _mint_access(self, iss: _Issuer, rec: RefreshTokenRecord, scopes, audience) -> dict:
        now = self.clock.now()
        with self._lock:
            self._jti += 1
            jti = f"{uuid.uuid4().hex}-{self._jti}"
            claims = ClaimSet(
                iss=iss.url,
                sub=rec.principal,
                aud=tuple(audience) if audience else (ANY_AUDIENCE,),
                iat=now,
                nbf=now,
                exp=now + self.lifetimes.access,
                jti=jti,
                scope=tuple(scopes),
                groups=(f"/{rec.experiment}", f"/{rec.experiment}/{rec.role}"),
            )
            token = mint(claims, iss.signing, iss.keys)
        return {
            "access_token": token,
            "token_type": "Bearer",
            "expires_in": self.lifetimes.access,
            "scope": format_scopes(scopes),
        }

    def _new_refresh(self, base: AuthCodeRecord | RefreshTokenRecord) -> RefreshTokenRecord:
        now = self.clock.now()
        rec = RefreshTokenRecord(
            handle=secrets.token_urlsafe(32),
            principal=base.principal,
            issuer=base.issuer,
            experiment=base.experiment,
            role=base.role,
            scopes=tuple(base.scopes),
            issued_at=now,
            expires_at=now + self.lifetimes.refresh,
            client_id=base.client_id,
        )
        # one live handle per (principal, issuer, experiment, role, client)
        for h, other in list(self._refresh.items()):
            if (other.principal, other.issuer, other.experiment, other.role, other.client_id) == (
                rec.principal, rec.issuer, rec.experiment, rec.role, rec.client_id
            ):
                del self._refresh[h]
        self._refresh[rec.handle] = rec
        self._issued_handles.append(rec.handle)
        return rec

    def _live_refresh(self, issuer: str, client_id: str, handle: str | None) -> RefreshTokenRecord:
        rec = self._refresh.get(handle or "")
        if rec is None or rec.issuer != issuer or rec.client_id != client_id:
            raise OAuthError("invalid_grant", "unknown refresh token")
        if self.clock.now() >= rec.expires_at:
            del self._refresh[rec.handle]
            raise OAuthError("invalid_grant", "refresh token expired")
        if (rec.experiment, rec.role) not in self.directory.roles_of(rec.principal):
            raise OAuthError("invalid_grant", "principal no longer holds this role")
        return rec

    def token_grant(
        self,
        issuer: str,
        grant_type: str,
        client_id: str,
        client_secret: str,
        code: str | None = None,
        refresh_token: str | None = None,
        scope: str | None = None,
        audience: str | None = None,
        redirect_uri: str | None = None,
    ) -> dict:
        iss = self._get(issuer)
        self._client(issuer, client_id, client_secret or "")
        with self._lock:
            if grant_type == GRANT_CODE:
                rec = self._codes.get(code or "")
                if rec is None or rec.redeemed or rec.client_id != client_id or rec.issuer != issuer:
                    raise OAuthError("invalid_grant", "unknown or already redeemed authorization code")
                rec.redeemed = True
                del self._codes[rec.code]
                if self.clock.now() >= rec.expires_at:
                    raise OAuthError("invalid_grant", "authorization code expired")
                if rec.redirect_uri and redirect_uri and redirect_uri != rec.redirect_uri:
                    raise OAuthError("invalid_grant", "redirect_uri mismatch")
                refresh = self._new_refresh(rec)
                resp = self._mint_access(iss, refresh, refresh.scopes, None)
                resp["refresh_token"] = refresh.handle
                resp["refresh_token_expires_in"] = self.lifetimes.refresh
                resp["sub"] = refresh.principal
                return resp

            if grant_type == GRANT_REFRESH:
                rec = self._live_refresh(issuer, client_id, refresh_token)
                try:
                    requested = parse_scopes(scope or "")
                    scopes = downscope(rec.scopes, requested)
                except DownscopeRefused as exc:
                    raise OAuthError("invalid_scope", str(exc)) from None
                except ScopeError as exc:
                    raise OAuthError("invalid_scope", str(exc)) from None
                aud = audience.split() if audience else None
                return self._mint_access(iss, rec, scopes, aud)

            if grant_type == GRANT_RENEW:
                rec = self._live_refresh(issuer, client_id, refresh_token)
                fresh = self._new_refresh(rec)
                return {
                    "refresh_token": fresh.handle,
                    "refresh_token_expires_in": self.lifetimes.refresh,
                    "token_type": "refresh",
                }

        raise OAuthError("unsupported_grant_type", f"grant type {grant_type!r} not supported")

    # -- introspection for operators and tests ------------------------------

    def refresh_record(self, handle: str) -> RefreshTokenRecord | None:
        return self._refresh.get(handle)

    def refresh_records(self) -> list[RefreshTokenRecord]:
        return list(self._refresh.values())

    def issued_handles(self) -> list[str]:
        """Every refresh handle ever issued, live or rotated away (audit trail)."""
        return list(self._issued_handles)
