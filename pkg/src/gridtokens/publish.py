"""Mock code-publication endpoint that authorizes uploads with bearer tokens.

It stands in for a resource server: tokens are checked offline against the
key sets of a configured list of issuers and must carry ``compute.create``.
"""
from __future__ import annotations

import hashlib
from typing import Callable, Mapping, Union

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .clock import SYSTEM_CLOCK, Clock
from .profile import KeySet, Scope, check_bearer

PUBLISH_SCOPE = Scope("compute.create")

Trusted = Union[Mapping[str, KeySet], Callable[[], Mapping[str, KeySet]]]


def fetch_trusted(issuer_urls, http: httpx.Client) -> dict[str, KeySet]:
    """Fetch each issuer's JWKS once; verification afterwards needs no network."""
    out = {}
    for url in issuer_urls:
        resp = http.get(f"{url.rstrip('/')}/jwks")
        resp.raise_for_status()
        out[url] = KeySet.from_jwks(resp.json())
    return out


def create_app(trusted: Trusted, clock: Clock = SYSTEM_CLOCK, audiences=None) -> FastAPI:
    app = FastAPI(title="publish")
    published: list[dict] = []
    app.state.published = published

    @app.post("/publish")
    async def publish(request: Request):
        scheme, _, token = request.headers.get("authorization", "").partition(" ")
        keys = trusted() if callable(trusted) else trusted
        decision = check_bearer(
            token.strip() if scheme.lower() == "bearer" else None, PUBLISH_SCOPE, keys, clock.now(), audiences
        )
        if not decision:
            status = 403 if decision.reason == "insufficient_scope" else 401
            return JSONResponse(
                {"error": decision.reason}, status_code=status, headers={"WWW-Authenticate": "Bearer"}
            )
        body = await request.body()
        entry = {"sub": decision.claims.sub, "iss": decision.claims.iss, "sha256": hashlib.sha256(body).hexdigest()}
        published.append(entry)
        return entry

    return app
