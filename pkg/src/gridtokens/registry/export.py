"""Projections of registry state: the two-part directory and generated configs."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

from ..profile import Decision, KeySet, Scope, check_bearer
from .state import RegistryState

DEFAULT_ISSUER_BASE = "https://issuer.test"


def canonical_json(data) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class DirectoryDocument:
    """Part 1: who holds which (experiment, role). Part 2: what each role grants."""

    members: tuple[tuple[str, tuple[tuple[str, str], ...]], ...]
    role_scopes: tuple[tuple[tuple[str, str], tuple[str, ...]], ...]
    serial: int

    def to_dict(self) -> dict:
        return {
            "serial": self.serial,
            "members": [{"user": u, "roles": [list(r) for r in roles]} for u, roles in self.members],
            "role_scopes": [
                {"experiment": exp, "role": role, "scopes": list(scopes)} for (exp, role), scopes in self.role_scopes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DirectoryDocument":
        return cls(
            members=tuple((m["user"], tuple(tuple(r) for r in m["roles"])) for m in data["members"]),
            role_scopes=tuple(((r["experiment"], r["role"]), tuple(r["scopes"])) for r in data["role_scopes"]),
            serial=data["serial"],
        )

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())

    def roles_of(self, user: str) -> set[tuple[str, str]]:
        for u, roles in self.members:
            if u == user:
                return set(roles)
        return set()


def export_directory(state: RegistryState) -> DirectoryDocument:
    by_user: dict[str, list[tuple[str, str]]] = {}
    for user, exp, role in state.assignments:
        if state.users[user].active:
            by_user.setdefault(user, []).append((exp, role))
    members = tuple((u, tuple(sorted(roles))) for u, roles in sorted(by_user.items()))
    referenced = sorted({r for _, roles in members for r in roles})
    role_scopes = tuple((key, tuple(sorted(str(s) for s in state.role_scopes[key]))) for key in referenced)
    return DirectoryDocument(members, role_scopes, state.serial)


@dataclass(frozen=True)
class GeneratedConfig:
    issuers: dict
    broker: dict

    def to_dict(self) -> dict:
        return {"issuers": self.issuers, "broker": self.broker}

    def to_json(self) -> bytes:
        return canonical_json(self.to_dict())


def client_id_for(issuer: str) -> str:
    return f"broker-{issuer}"


def generate_configs(state: RegistryState, issuer_base: str = DEFAULT_ISSUER_BASE) -> GeneratedConfig:
    """Issuer-side and broker-side configuration derived from the registry.

    Shared-issuer experiments collapse under one issuer entry but keep their own
    name on the broker side, so broker clients see one issuer per experiment.
    """
    issuers: dict[str, dict] = {}
    broker: dict[str, dict] = {}
    for name in sorted(state.experiments):
        exp = state.experiments[name]
        iss = state.issuer_assignments[name]
        url = f"{issuer_base.rstrip('/')}/{iss}"
        roles = {
            role: sorted(str(s) for s in scopes)
            for (e, role), scopes in sorted(state.role_scopes.items())
            if e == name
        }
        entry = issuers.setdefault(iss, {"url": url, "client_id": client_id_for(iss), "experiments": {}})
        entry["experiments"][name] = {
            "group": f"/{name}",
            "storage_prefix": exp.storage_prefix,
            "roles": roles,
        }
        broker[name] = {"issuer": iss, "issuer_url": url, "roles": sorted(roles), "realm": name}
    return GeneratedConfig(issuers, broker)


def authorize_api(token: str | None, required: Scope, trusted: Mapping[str, KeySet], now: int) -> Decision:
    """Gate for mutating registry calls: a token from a trusted issuer carrying ``required``."""
    return check_bearer(token, required, trusted, now)
