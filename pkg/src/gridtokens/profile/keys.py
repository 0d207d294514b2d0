"""Signing keys and published key sets (JWKS)."""
from __future__ import annotations

import json
import uuid
from dataclasses import dataclass
from typing import Any, Iterable

from cryptography.hazmat.primitives.asymmetric import ec, rsa
from jwt.algorithms import ECAlgorithm, RSAAlgorithm

from .errors import UnknownKey

SUPPORTED_ALGS = ("ES256", "RS256")
_JWK = {"ES256": ECAlgorithm, "RS256": RSAAlgorithm}


@dataclass(frozen=True)
class PublicKey:
    kid: str
    alg: str
    key: Any

    def to_jwk(self) -> dict:
        jwk = _JWK[self.alg].to_jwk(self.key, as_dict=True)
        jwk.update(kid=self.kid, alg=self.alg, use="sig")
        return jwk

    @classmethod
    def from_jwk(cls, jwk: dict) -> "PublicKey":
        alg = jwk.get("alg")
        if alg not in SUPPORTED_ALGS:
            raise ValueError(f"unsupported key algorithm {alg!r}")
        key = _JWK[alg].from_jwk(json.dumps(jwk))
        if not hasattr(key, "public_numbers") or hasattr(key, "private_numbers"):
            raise ValueError("JWKS entries must be public keys")
        return cls(jwk["kid"], alg, key)


@dataclass(frozen=True)
class SigningKey:
    kid: str
    alg: str
    private_key: Any

    @classmethod
    def generate(cls, alg: str = "ES256", kid: str | None = None) -> "SigningKey":
        if alg == "ES256":
            priv = ec.generate_private_key(ec.SECP256R1())
        elif alg == "RS256":
            priv = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        else:
            raise ValueError(f"unsupported signing algorithm {alg!r}")
        return cls(kid or uuid.uuid4().hex[:16], alg, priv)

    def public(self) -> PublicKey:
        return PublicKey(self.kid, self.alg, self.private_key.public_key())


class KeySet:
    """Immutable set of public verification keys with unique key ids."""

    def __init__(self, keys: Iterable[PublicKey] = ()):
        self._keys: dict[str, PublicKey] = {}
        for k in keys:
            if k.kid in self._keys:
                raise ValueError(f"duplicate key id {k.kid!r}")
            self._keys[k.kid] = k

    def __len__(self):
        return len(self._keys)

    def __iter__(self):
        return iter(self._keys.values())

    def __contains__(self, kid):
        return kid in self._keys

    @property
    def kids(self) -> list[str]:
        return list(self._keys)

    def get(self, kid: str) -> PublicKey:
        try:
            return self._keys[kid]
        except KeyError:
            raise UnknownKey(f"no key with id {kid!r}") from None

    def with_key(self, key: PublicKey) -> "KeySet":
        return KeySet([*self._keys.values(), key])

    def to_jwks(self) -> dict:
        return {"keys": [k.to_jwk() for k in self._keys.values()]}

    @classmethod
    def from_jwks(cls, doc: dict | str) -> "KeySet":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls(PublicKey.from_jwk(j) for j in doc["keys"])
