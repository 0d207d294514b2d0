"""HTTP surface of the broker."""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse

from .errors import BrokerError, Unauthorized
from .service import BrokerService


def bearer(request: Request) -> str | None:
    scheme, _, value = request.headers.get("authorization", "").partition(" ")
    return value.strip() if scheme.lower() == "bearer" and value.strip() else None


async def _json(request: Request) -> dict:
    try:
        body = await request.json()
    except ValueError:
        raise BrokerError("request body must be JSON", code="invalid_request") from None
    if not isinstance(body, dict):
        raise BrokerError("request body must be a JSON object", code="invalid_request")
    return body


def create_app(service: BrokerService) -> FastAPI:
    app = FastAPI(title="broker")

    @app.exception_handler(BrokerError)
    async def broker_error(request: Request, exc: BrokerError):
        headers = {"Retry-After": str(exc.retry_after)} if exc.retry_after is not None else None
        return JSONResponse(exc.to_dict(), status_code=exc.status, headers=headers)

    @app.post("/v1/auth/oidc/begin")
    async def begin(request: Request):
        body = await _json(request)
        return service.bootstrap_begin(body.get("principal", ""), body.get("experiment", ""), body.get("role", ""))

    @app.get("/v1/auth/oidc/poll/{handle}")
    def poll(handle: str):
        return service.bootstrap_poll(handle)

    @app.get("/v1/auth/oidc/callback")
    def callback(state: str = "", code: str | None = None, error: str | None = None):
        service.oidc_callback(state, code, error)
        message = "Authentication complete; you may close this window." if code else "Authorization was not granted."
        return HTMLResponse(f"<!doctype html><html><body><p>{message}</p></body></html>")

    @app.post("/v1/auth/secondary")
    async def secondary(request: Request):
        body = await _json(request)
        tok = service.renew(body.get("assertion") or {}, body.get("experiment", ""), body.get("role", ""))
        return tok.to_dict()

    @app.post("/v1/token/exchange")
    async def exchange(request: Request):
        secret = bearer(request)
        if not secret:
            raise Unauthorized("broker token required", code="token_unknown")
        body = await _json(request) if await request.body() else {}
        return service.exchange(secret, body.get("scopes"), body.get("audience"))

    @app.post("/v1/admin/robot")
    async def robot(request: Request):
        body = await _json(request)
        key = service.store_for_robot(
            bearer(request),
            body.get("principal", ""),
            body.get("experiment", ""),
            body.get("role", ""),
            body.get("grant", ""),
            body.get("public_key", ""),
        )
        return {"key": str(key)}

    @app.post("/v1/admin/config")
    async def reload_config(request: Request):
        service.check_admin(bearer(request))
        return service.apply_config(await request.body()).to_dict()

    @app.get("/v1/health")
    def health():
        return service.health()

    return app
