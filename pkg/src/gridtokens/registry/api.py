"""HTTP+JSON surface of the registry."""
from __future__ import annotations

from typing import Callable, Mapping, Union

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from ..clock import SYSTEM_CLOCK, Clock
from ..profile import KeySet, Scope
from .export import DEFAULT_ISSUER_BASE, authorize_api, export_directory, generate_configs
from .journal import Registry
from .state import RegistryError, change_from_dict

Trusted = Union[Mapping[str, KeySet], Callable[[], Mapping[str, KeySet]]]
DEFAULT_WRITE_SCOPE = Scope("compute.modify")


def _bearer(request: Request) -> str | None:
    auth = request.headers.get("authorization", "")
    scheme, _, value = auth.partition(" ")
    return value.strip() if scheme.lower() == "bearer" and value else None


def create_app(
    registry: Registry,
    trusted: Trusted,
    clock: Clock = SYSTEM_CLOCK,
    write_scope: Scope = DEFAULT_WRITE_SCOPE,
    issuer_base: str = DEFAULT_ISSUER_BASE,
) -> FastAPI:
    app = FastAPI(title="registry")

    def serial_headers(serial: int) -> dict:
        return {"X-Registry-Serial": str(serial)}

    @app.post("/change")
    async def post_change(request: Request):
        keys = trusted() if callable(trusted) else trusted
        decision = authorize_api(_bearer(request), write_scope, keys, clock.now())
        if not decision:
            status = 403 if decision.reason == "insufficient_scope" else 401
            return JSONResponse({"error": decision.reason}, status_code=status)
        try:
            change = change_from_dict(await request.json())
            state = registry.apply(change)
        except RegistryError as exc:
            return JSONResponse({"error": exc.code, "message": str(exc), "serial": registry.state.serial}, 400)
        return JSONResponse({"serial": state.serial}, headers=serial_headers(state.serial))

    @app.get("/directory")
    def get_directory():
        state = registry.state
        body = export_directory(state).to_json()
        return Response(body, media_type="application/json", headers=serial_headers(state.serial))

    @app.get("/configs")
    def get_configs():
        state = registry.state
        body = generate_configs(state, issuer_base).to_json()
        return Response(body, media_type="application/json", headers=serial_headers(state.serial))

    return app
