from __future__ import annotations

import httpx

from .errors import ERRORS_BY_CODE, CredStoreError, StoreUnavailable


class CredStoreClient:
    def __init__(self, base_url: str, http: httpx.Client | None = None, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.http = http or httpx.Client(timeout=timeout)

    def _call(self, method: str, path: str, json=None) -> dict:
        try:
            resp = self.http.request(method, f"{self.base_url}{path}", json=json)
        except httpx.TransportError as exc:
            raise StoreUnavailable(f"{self.base_url} unreachable: {exc}") from None
        try:
            body = resp.json()
        except ValueError:
            body = {}
        if resp.status_code >= 400:
            code = body.get("error", "credstore_error")
            raise ERRORS_BY_CODE.get(code, CredStoreError)(
                body.get("message", resp.text), code=code, status=resp.status_code,
                retriable=body.get("retriable", resp.status_code >= 500),
            )
        return body

    def store(self, owner: str, experiment: str, role: str, broker_token: str) -> dict:
        body = {"owner": owner, "experiment": experiment, "role": role, "broker_token": broker_token}
        return self._call("POST", "/v1/creds", body)

    def attach(self, job_id: str, owner: str, experiment: str, role: str, sandbox: str, **extra) -> dict:
        body = {"job_id": job_id, "owner": owner, "experiment": experiment, "role": role, "sandbox": sandbox, **extra}
        return self._call("POST", "/v1/jobs", body)

    def cycle(self, now: int | None = None) -> dict:
        return self._call("POST", "/v1/cycle", {} if now is None else {"now": now})

    def report(self) -> dict:
        return self._call("GET", "/v1/report")
