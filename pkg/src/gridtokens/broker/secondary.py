"""Signed-timestamp secondary authentication.

A principal enrolls an Ed25519 public key with the broker once; afterwards it
proves itself by signing ``(principal, realm, timestamp)``. This plays the part
that Kerberos or an ssh-agent key plays for a production vault.
"""
from __future__ import annotations

import base64
import os
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from ..fsutil import atomic_write
from .errors import AssertionRejected, StaleAssertion

ASSERTION_WINDOW = 300


def _message(principal: str, realm: str, timestamp: int) -> bytes:
    return f"gridtokens-secondary-v1\n{principal}\n{realm}\n{int(timestamp)}".encode()


def decode_public_key(text: str) -> Ed25519PublicKey:
    try:
        raw = base64.b64decode(text, validate=True)
        return Ed25519PublicKey.from_public_bytes(raw)
    except (ValueError, TypeError) as exc:
        raise ValueError(f"not a base64 Ed25519 public key: {exc}") from None


class SecondaryKey:
    def __init__(self, private_key: Ed25519PrivateKey):
        self._key = private_key

    @classmethod
    def generate(cls) -> "SecondaryKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SecondaryKey":
        key = serialization.load_pem_private_key(Path(path).read_bytes(), password=None)
        if not isinstance(key, Ed25519PrivateKey):
            raise ValueError(f"{path} is not an Ed25519 private key")
        return cls(key)

    def save(self, path: str | os.PathLike) -> Path:
        pem = self._key.private_bytes(
            serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()
        )
        return atomic_write(path, pem, mode=0o600)

    def public_b64(self) -> str:
        raw = self._key.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        return base64.b64encode(raw).decode()

    def assertion(self, principal: str, realm: str, now: int) -> dict:
        sig = self._key.sign(_message(principal, realm, now))
        return {
            "principal": principal,
            "realm": realm,
            "timestamp": int(now),
            "signature": base64.b64encode(sig).decode(),
        }


def verify_assertion(assertion: dict, public_key: str, realm: str, now: int, window: int = ASSERTION_WINDOW) -> str:
    """Check an assertion and return the authenticated principal."""
    try:
        principal = str(assertion["principal"])
        ts = int(assertion["timestamp"])
        sig = base64.b64decode(assertion["signature"], validate=True)
    except (KeyError, TypeError, ValueError):
        raise AssertionRejected("malformed assertion") from None
    if assertion.get("realm") != realm:
        raise AssertionRejected(f"assertion is for realm {assertion.get('realm')!r}, expected {realm!r}")
    if abs(now - ts) > window:
        raise StaleAssertion(f"assertion timestamp is {now - ts:+d}s off the broker clock")
    try:
        decode_public_key(public_key).verify(sig, _message(principal, realm, ts))
    except (InvalidSignature, ValueError):
        raise AssertionRejected("assertion signature does not verify") from None
    return principal
