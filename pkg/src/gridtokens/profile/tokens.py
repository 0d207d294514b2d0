"""Minting and offline verification of WLCG-profile JWT access tokens."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import jwt

from .errors import (
    AudienceMismatch,
    BadSignature,
    ClaimValidationError,
    Expired,
    InsufficientScope,
    MalformedToken,
    NotYetValid,
    ScopeError,
    TokenError,
    UnknownKey,
    WrongIssuer,
)
from .keys import SUPPORTED_ALGS, KeySet, SigningKey
from .scopes import Scope, covered, format_scopes, parse_scopes

ANY_AUDIENCE = "https://wlcg.cern.ch/jwt/v1/any"
PROFILE_VERSION = "1.0"
DEFAULT_SKEW = 60


@dataclass(frozen=True)
class ClaimSet:
    iss: str
    sub: str
    exp: int
    iat: int
    nbf: int
    jti: str
    aud: tuple[str, ...] = (ANY_AUDIENCE,)
    scope: tuple[Scope, ...] = ()
    groups: tuple[str, ...] = ()
    ver: str = PROFILE_VERSION

    def validate(self) -> "ClaimSet":
        if not (self.iat <= self.nbf <= self.exp and self.exp > self.iat):
            raise ClaimValidationError(
                f"need iat <= nbf <= exp and exp > iat (iat={self.iat} nbf={self.nbf} exp={self.exp})"
            )
        if not self.iss or not self.sub or not self.jti:
            raise ClaimValidationError("iss, sub and jti must be non-empty")
        if not self.aud or not all(isinstance(a, str) and a for a in self.aud):
            raise ClaimValidationError("aud must be a non-empty list of strings")
        for g in self.groups:
            if not g.startswith("/") or "" in g[1:].split("/"):
                raise ClaimValidationError(f"malformed group {g!r}")
        for s in self.scope:
            if not isinstance(s, Scope):
                raise ClaimValidationError(f"scope entries must be Scope, got {s!r}")
        return self

    @property
    def lifetime(self) -> int:
        return self.exp - self.iat

    def to_payload(self) -> dict:
        return {
            "iss": self.iss,
            "sub": self.sub,
            "aud": list(self.aud),
            "exp": self.exp,
            "iat": self.iat,
            "nbf": self.nbf,
            "jti": self.jti,
            "scope": format_scopes(self.scope),
            "wlcg.groups": list(self.groups),
            "wlcg.ver": self.ver,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "ClaimSet":
        try:
            aud = payload["aud"]
            if isinstance(aud, str):
                aud = [aud]
            return cls(
                iss=payload["iss"],
                sub=payload["sub"],
                aud=tuple(aud),
                exp=int(payload["exp"]),
                iat=int(payload["iat"]),
                nbf=int(payload.get("nbf", payload["iat"])),
                jti=payload["jti"],
                scope=tuple(parse_scopes(payload.get("scope", ""))),
                groups=tuple(payload.get("wlcg.groups", ())),
                ver=payload.get("wlcg.ver", PROFILE_VERSION),
            )
        except (KeyError, TypeError, ValueError, ScopeError) as exc:
            raise MalformedToken(f"unusable claims: {exc}") from exc


@dataclass(frozen=True)
class VerifyPolicy:
    """What a relying party requires of a token.

    ``audiences=None`` accepts any audience; otherwise the token's ``aud`` must
    share at least one entry with it (include ``ANY_AUDIENCE`` to honour
    unrestricted tokens).
    """

    issuer: str | None = None
    audiences: frozenset[str] | None = None
    required_scopes: tuple[Scope, ...] = ()
    skew: int = DEFAULT_SKEW

    def __post_init__(self):
        if self.skew < 0:
            raise ValueError("clock-skew tolerance must be >= 0")
        if self.audiences is not None:
            object.__setattr__(self, "audiences", frozenset(self.audiences))
        object.__setattr__(self, "required_scopes", tuple(self.required_scopes))


def mint(claims: ClaimSet, key: SigningKey, keys: KeySet | None = None) -> str:
    claims.validate()
    if keys is not None and key.kid not in keys:
        raise UnknownKey(f"signing key {key.kid!r} is not in the published key set")
    return jwt.encode(
        claims.to_payload(), key.private_key, algorithm=key.alg, headers={"kid": key.kid, "typ": "JWT"}
    )


def _b64decode(segment: str) -> bytes:
    return base64.urlsafe_b64decode(segment + "=" * (-len(segment) % 4))


def unverified_claims(token: str) -> ClaimSet:
    """Decode claims without checking the signature.

    Only for a holder inspecting its own token (cache checks); never for
    authorization decisions.
    """
    try:
        _, payload, _ = token.split(".")
        data = json.loads(_b64decode(payload))
    except ValueError as exc:
        raise MalformedToken(str(exc)) from exc
    if not isinstance(data, dict):
        raise MalformedToken("payload is not a JSON object")
    return ClaimSet.from_payload(data)


def verify(token: str, keys: KeySet, policy: VerifyPolicy, now: int) -> ClaimSet:
    if not isinstance(token, str) or token.count(".") != 2:
        raise MalformedToken("not a three-part compact token")
    try:
        header = jwt.get_unverified_header(token)
    except jwt.PyJWTError as exc:
        raise MalformedToken(str(exc)) from exc
    alg, kid = header.get("alg"), header.get("kid")
    if alg not in SUPPORTED_ALGS:
        raise MalformedToken(f"unsupported algorithm {alg!r}")
    if not isinstance(kid, str):
        raise MalformedToken("header carries no key id")
    pub = keys.get(kid)
    if pub.alg != alg:
        raise BadSignature(f"key {kid!r} is {pub.alg}, token claims {alg}")
    try:
        payload = jwt.decode(
            token,
            pub.key,
            algorithms=[alg],
            options={
                "verify_signature": True,
                "verify_exp": False,
                "verify_nbf": False,
                "verify_iat": False,
                "verify_aud": False,
                "verify_iss": False,
                "require": [],
            },
        )
    except jwt.InvalidSignatureError as exc:
        raise BadSignature(str(exc)) from exc
    except jwt.PyJWTError as exc:
        raise MalformedToken(str(exc)) from exc
    claims = ClaimSet.from_payload(payload)

    if policy.issuer is not None and claims.iss != policy.issuer:
        raise WrongIssuer(f"issuer {claims.iss!r} is not {policy.issuer!r}")
    if now > claims.exp + policy.skew:
        raise Expired(f"token expired at {claims.exp}")
    if now < claims.nbf - policy.skew:
        raise NotYetValid(f"token not valid before {claims.nbf}")
    if policy.audiences is not None and not policy.audiences.intersection(claims.aud):
        raise AudienceMismatch(f"audience {list(claims.aud)} not accepted")
    for req in policy.required_scopes:
        if not covered(claims.scope, req):
            raise InsufficientScope(f"token lacks scope {req}")
    return claims


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str = ""
    claims: ClaimSet | None = field(default=None, compare=False)

    def __bool__(self):
        return self.allowed


def check_bearer(
    token: str | None,
    required: Scope | Iterable[Scope],
    trusted: Mapping[str, KeySet],
    now: int,
    audiences: Iterable[str] | None = None,
    skew: int = DEFAULT_SKEW,
) -> Decision:
    """Allow/deny a bearer token for a resource server.

    ``trusted`` maps issuer URL to that issuer's published keys. Reasons are
    the error category codes (``untrusted_issuer``, ``expired``, ...).
    """
    if not token:
        return Decision(False, "missing_token")
    required = (required,) if isinstance(required, Scope) else tuple(required)
    try:
        iss = unverified_claims(token).iss
    except TokenError as exc:
        return Decision(False, exc.code)
    if iss not in trusted:
        return Decision(False, "untrusted_issuer")
    policy = VerifyPolicy(
        issuer=iss,
        audiences=None if audiences is None else frozenset(audiences),
        required_scopes=required,
        skew=skew,
    )
    try:
        claims = verify(token, trusted[iss], policy, now)
    except TokenError as exc:
        return Decision(False, exc.code)
    return Decision(True, "ok", claims)
