"""HTTP client for the broker API, shared by the token client, credstore and robot manager."""
from __future__ import annotations

from typing import Iterable

import httpx

from .errors import ERRORS_BY_CODE, BrokerError, BrokerUnreachable


class BrokerClient:
    def __init__(self, base_url: str | None = None, http: httpx.Client | None = None, timeout: float = 30.0):
        if http is None:
            if not base_url:
                raise ValueError("need a broker URL or an HTTP client")
            http = httpx.Client(timeout=timeout)
        self.base_url = (base_url or "").rstrip("/")
        self.http = http
        self.requests = 0

    def _call(self, method: str, path: str, json=None, token: str | None = None, content=None) -> dict:
        self.requests += 1
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        try:
            resp = self.http.request(method, f"{self.base_url}{path}", json=json, headers=headers, content=content)
        except httpx.TransportError as exc:
            raise BrokerUnreachable(f"broker unreachable: {type(exc).__name__}: {exc}") from None
        try:
            body = resp.json()
        except ValueError:
            body = {}
        if resp.status_code >= 400:
            code = body.get("error") or "broker_error"
            cls = ERRORS_BY_CODE.get(code, BrokerError)
            retry = body.get("retry_after")
            if retry is None and resp.headers.get("retry-after"):
                retry = int(resp.headers["retry-after"])
            raise cls(
                body.get("message", resp.text),
                code=code,
                status=resp.status_code,
                retry_after=retry,
                retriable=body.get("retriable", resp.status_code >= 500),
            )
        return body

    def begin(self, principal: str, experiment: str, role: str) -> dict:
        return self._call("POST", "/v1/auth/oidc/begin", {"principal": principal, "experiment": experiment, "role": role})

    def poll(self, handle: str) -> dict:
        return self._call("GET", f"/v1/auth/oidc/poll/{handle}")

    def renew(self, assertion: dict, experiment: str, role: str) -> dict:
        return self._call("POST", "/v1/auth/secondary", {"assertion": assertion, "experiment": experiment, "role": role})

    def exchange(self, broker_token: str, scopes: Iterable[str] | None = None, audience: str | None = None) -> dict:
        body = {}
        if scopes:
            body["scopes"] = [str(s) for s in scopes]
        if audience:
            body["audience"] = audience
        return self._call("POST", "/v1/token/exchange", body, token=broker_token)

    def store_robot(self, admin: str, principal: str, experiment: str, role: str, grant: str, public_key: str) -> dict:
        body = {"principal": principal, "experiment": experiment, "role": role, "grant": grant, "public_key": public_key}
        return self._call("POST", "/v1/admin/robot", body, token=admin)

    def reload_config(self, admin: str, document: str) -> dict:
        return self._call("POST", "/v1/admin/config", token=admin, content=document.encode())

    def health(self) -> dict:
        return self._call("GET", "/v1/health")
