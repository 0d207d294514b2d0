"""HTTP surface of the issuer: discovery, JWKS, consent page, token endpoint.

Every issuer lives under its own path prefix, so an issuer URL such as
``https://issuer.test/dune`` serves ``/dune/.well-known/openid-configuration``.
"""
from __future__ import annotations

import html
from urllib.parse import urlencode

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse, RedirectResponse

from .service import IssuerService, OAuthError

_CONSENT = """<!doctype html>
<html><head><title>Authorize {client}</title></head>
<body>
<h1>{issuer}: authorize {client}</h1>
<p>Grant <b>{experiment}/{role}</b> tokens to {client}?</p>
<form method="post" action="authorize">
<label>User <input name="user" value="{user}"></label>
{hidden}
<button name="decision" value="approve">Approve</button>
<button name="decision" value="deny">Deny</button>
</form>
</body></html>
"""

_FLOW_PARAMS = ("client_id", "redirect_uri", "state", "experiment", "role")


def _redirect(uri: str, **params) -> RedirectResponse:
    sep = "&" if "?" in uri else "?"
    return RedirectResponse(f"{uri}{sep}{urlencode({k: v for k, v in params.items() if v is not None})}", 302)


def create_app(service: IssuerService) -> FastAPI:
    app = FastAPI(title="issuer")

    @app.exception_handler(OAuthError)
    async def oauth_error(request: Request, exc: OAuthError):
        return JSONResponse(exc.to_dict(), status_code=exc.status, headers={"Cache-Control": "no-store"})

    @app.get("/{issuer}/.well-known/openid-configuration")
    def discovery(issuer: str):
        return service.discovery(issuer)

    @app.get("/{issuer}/jwks")
    def jwks(issuer: str):
        return service.jwks(issuer).to_jwks()

    def _complete(issuer: str, params: dict, user: str, approve: bool):
        redirect_uri = params.get("redirect_uri")
        try:
            rec = service.authorize(
                issuer,
                params.get("client_id", ""),
                params.get("role", ""),
                user,
                approve=approve,
                experiment=params.get("experiment") or None,
                redirect_uri=redirect_uri,
            )
        except OAuthError as exc:
            if redirect_uri and exc.error != "invalid_client":
                return _redirect(redirect_uri, error=exc.error, error_description=exc.description, state=params.get("state"))
            raise
        if redirect_uri:
            return _redirect(redirect_uri, code=rec.code, state=params.get("state"))
        return {"code": rec.code, "state": params.get("state")}

    @app.get("/{issuer}/authorize")
    def authorize_page(issuer: str, request: Request):
        service.url(issuer)
        params = dict(request.query_params)
        hint = params.get("login_hint", "")
        if service.auto_approve and hint:
            return _complete(issuer, params, hint, True)
        hidden = "\n".join(
            f'<input type="hidden" name="{k}" value="{html.escape(params.get(k, ""), quote=True)}">'
            for k in _FLOW_PARAMS
        )
        page = _CONSENT.format(
            issuer=html.escape(issuer),
            client=html.escape(params.get("client_id", "")),
            experiment=html.escape(params.get("experiment") or issuer),
            role=html.escape(params.get("role", "")),
            user=html.escape(hint, quote=True),
            hidden=hidden,
        )
        return HTMLResponse(page)

    @app.post("/{issuer}/authorize")
    async def authorize_submit(issuer: str, request: Request):
        form = dict(await request.form())
        return _complete(issuer, form, form.get("user", ""), form.get("decision") == "approve")

    @app.post("/{issuer}/token")
    async def token(issuer: str, request: Request):
        form = dict(await request.form())
        resp = service.token_grant(
            issuer,
            grant_type=form.get("grant_type", ""),
            client_id=form.get("client_id", ""),
            client_secret=form.get("client_secret", ""),
            code=form.get("code"),
            refresh_token=form.get("refresh_token"),
            scope=form.get("scope"),
            audience=form.get("audience"),
            redirect_uri=form.get("redirect_uri"),
        )
        return JSONResponse(resp, headers={"Cache-Control": "no-store"})

    return app
