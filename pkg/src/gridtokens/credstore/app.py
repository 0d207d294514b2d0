"""HTTP surface of the credential store."""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .errors import CredStoreError, InvalidRegistration
from .service import CredStore, JobRegistration


async def _json(request: Request) -> dict:
    try:
        body = await request.json()
    except ValueError:
        body = None
    if not isinstance(body, dict):
        raise CredStoreError("request body must be a JSON object", code="invalid_request")
    return body


def create_app(store: CredStore) -> FastAPI:
    app = FastAPI(title="credstore")

    @app.exception_handler(CredStoreError)
    async def credstore_error(request: Request, exc: CredStoreError):
        return JSONResponse(exc.to_dict(), status_code=exc.status)

    @app.post("/v1/creds")
    async def store_credential(request: Request):
        body = await _json(request)
        return store.store_credential(
            body.get("owner", ""), body.get("experiment", ""), body.get("role", ""), body.get("broker_token", "")
        )

    @app.post("/v1/jobs")
    async def attach(request: Request):
        body = await _json(request)
        try:
            reg = JobRegistration(
                job_id=str(body["job_id"]),
                owner=body["owner"],
                experiment=body["experiment"],
                role=body["role"],
                sandbox=body["sandbox"],
                scopes=tuple(body.get("scopes") or ()),
                audience=body.get("audience"),
                lead=body.get("lead"),
            )
        except KeyError as exc:
            raise InvalidRegistration(f"missing field {exc.args[0]!r}") from None
        return store.attach_job(reg)

    @app.post("/v1/cycle")
    async def cycle(request: Request):
        body = await _json(request) if await request.body() else {}
        return store.refresh_cycle(body.get("now"))

    @app.get("/v1/report")
    def report():
        return store.report()

    return app
