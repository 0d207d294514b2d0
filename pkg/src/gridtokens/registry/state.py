"""Registry state and the changes that evolve it.

State objects are treated as immutable snapshots: ``apply_change`` returns a
new state and never mutates its input, so readers can hold a snapshot while
the single writer moves on.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Union

from ..profile import Scope, ScopeError, parse_scope

SHARED_ISSUER = "fermilab"
_NAME_RE = re.compile(r"^[a-z0-9]+$")
_ROLE_RE = re.compile(r"^[a-z][a-z0-9_-]*$")


class RegistryError(ValueError):
    code = "invalid_change"


class DanglingReference(RegistryError):
    code = "dangling_reference"


class DuplicateEntity(RegistryError):
    code = "duplicate"


@dataclass(frozen=True)
class User:
    user_id: str
    display_name: str = ""
    active: bool = True


@dataclass(frozen=True)
class Experiment:
    name: str
    dedicated_issuer: bool = False
    storage_prefix: str = ""

    @property
    def issuer(self) -> str:
        return self.name if self.dedicated_issuer else SHARED_ISSUER


@dataclass(frozen=True)
class RegistryState:
    users: dict[str, User] = field(default_factory=dict)
    experiments: dict[str, Experiment] = field(default_factory=dict)
    assignments: frozenset[tuple[str, str, str]] = frozenset()
    role_scopes: dict[tuple[str, str], frozenset[Scope]] = field(default_factory=dict)
    issuer_assignments: dict[str, str] = field(default_factory=dict)
    serial: int = 0

    def check(self) -> None:
        for user, exp, role in self.assignments:
            if user not in self.users or exp not in self.experiments:
                raise DanglingReference(f"assignment ({user}, {exp}, {role}) references unknown entity")
            if (exp, role) not in self.role_scopes:
                raise DanglingReference(f"assignment ({user}, {exp}, {role}) has no role scopes")
        if set(self.issuer_assignments) != set(self.experiments):
            raise RegistryError("every experiment needs exactly one issuer assignment")
        for name, exp in self.experiments.items():
            if self.issuer_assignments[name] != exp.issuer:
                raise RegistryError(f"issuer assignment for {name} is inconsistent")


# -- changes ---------------------------------------------------------------


@dataclass(frozen=True)
class AddUser:
    user_id: str
    display_name: str = ""
    op = "add-user"


@dataclass(frozen=True)
class AddExperiment:
    name: str
    dedicated_issuer: bool = False
    storage_prefix: str | None = None
    op = "add-experiment"


@dataclass(frozen=True)
class AssignRole:
    user_id: str
    experiment: str
    role: str
    op = "assign-role"


@dataclass(frozen=True)
class SetRoleScopes:
    experiment: str
    role: str
    scopes: tuple[str, ...]
    op = "set-role-scopes"


@dataclass(frozen=True)
class DeactivateUser:
    user_id: str
    op = "deactivate-user"


Change = Union[AddUser, AddExperiment, AssignRole, SetRoleScopes, DeactivateUser]
CHANGE_TYPES = {c.op: c for c in (AddUser, AddExperiment, AssignRole, SetRoleScopes, DeactivateUser)}


def change_to_dict(change: Change) -> dict:
    data = {k: getattr(change, k) for k in change.__dataclass_fields__}
    if isinstance(change, SetRoleScopes):
        data["scopes"] = list(change.scopes)
    return {"op": change.op, **data}


def change_from_dict(data: dict) -> Change:
    data = dict(data)
    try:
        cls = CHANGE_TYPES[data.pop("op")]
    except KeyError as exc:
        raise RegistryError(f"unknown change op {exc}") from None
    if cls is SetRoleScopes:
        data["scopes"] = tuple(data.get("scopes", ()))
    try:
        return cls(**data)
    except TypeError as exc:
        raise RegistryError(str(exc)) from None


def apply_change(state: RegistryState, change: Change) -> RegistryState:
    if isinstance(change, AddUser):
        if not change.user_id:
            raise RegistryError("user id must be non-empty")
        if change.user_id in state.users:
            raise DuplicateEntity(f"user {change.user_id!r} exists")
        users = {**state.users, change.user_id: User(change.user_id, change.display_name)}
        new = replace(state, users=users)

    elif isinstance(change, AddExperiment):
        name = change.name
        if not _NAME_RE.match(name or ""):
            raise RegistryError(f"experiment name must be lowercase alphanumeric: {name!r}")
        if name in state.experiments:
            raise DuplicateEntity(f"experiment {name!r} exists")
        prefix = change.storage_prefix or f"/{name}"
        if not change.dedicated_issuer and prefix != f"/{name}":
            raise RegistryError(f"shared-issuer experiment {name} must use storage prefix /{name}")
        try:
            parse_scope(f"storage.read:{prefix}")
        except ScopeError as exc:
            raise RegistryError(f"bad storage prefix: {exc}") from None
        exp = Experiment(name, change.dedicated_issuer, prefix)
        new = replace(
            state,
            experiments={**state.experiments, name: exp},
            issuer_assignments={**state.issuer_assignments, name: exp.issuer},
        )

    elif isinstance(change, SetRoleScopes):
        if change.experiment not in state.experiments:
            raise DanglingReference(f"unknown experiment {change.experiment!r}")
        if not _ROLE_RE.match(change.role or ""):
            raise RegistryError(f"role must be a lowercase name: {change.role!r}")
        try:
            scopes = frozenset(parse_scope(s) for s in change.scopes)
        except ScopeError as exc:
            raise RegistryError(f"scope parse failure: {exc}") from None
        key = (change.experiment, change.role)
        new = replace(state, role_scopes={**state.role_scopes, key: scopes})

    elif isinstance(change, AssignRole):
        if change.user_id not in state.users:
            raise DanglingReference(f"unknown user {change.user_id!r}")
        if change.experiment not in state.experiments:
            raise DanglingReference(f"unknown experiment {change.experiment!r}")
        if (change.experiment, change.role) not in state.role_scopes:
            raise DanglingReference(f"role {change.experiment}/{change.role} has no scopes defined")
        entry = (change.user_id, change.experiment, change.role)
        if entry in state.assignments:
            raise DuplicateEntity(f"assignment {entry} exists")
        new = replace(state, assignments=state.assignments | {entry})

    elif isinstance(change, DeactivateUser):
        user = state.users.get(change.user_id)
        if user is None:
            raise DanglingReference(f"unknown user {change.user_id!r}")
        new = replace(state, users={**state.users, user.user_id: replace(user, active=False)})

    else:
        raise RegistryError(f"not a registry change: {change!r}")

    new = replace(new, serial=state.serial + 1)
    new.check()
    return new


def replay(changes) -> RegistryState:
    state = RegistryState()
    for change in changes:
        state = apply_change(state, change)
    return state


# -- snapshot (de)serialisation ---------------------------------------------


def state_to_dict(state: RegistryState) -> dict:
    return {
        "serial": state.serial,
        "users": [
            {"user_id": u.user_id, "display_name": u.display_name, "active": u.active}
            for u in sorted(state.users.values(), key=lambda u: u.user_id)
        ],
        "experiments": [
            {"name": e.name, "dedicated_issuer": e.dedicated_issuer, "storage_prefix": e.storage_prefix}
            for e in sorted(state.experiments.values(), key=lambda e: e.name)
        ],
        "assignments": [list(a) for a in sorted(state.assignments)],
        "role_scopes": [
            {"experiment": exp, "role": role, "scopes": sorted(str(s) for s in scopes)}
            for (exp, role), scopes in sorted(state.role_scopes.items())
        ],
    }


def state_from_dict(data: dict) -> RegistryState:
    experiments = {e["name"]: Experiment(**e) for e in data["experiments"]}
    state = RegistryState(
        users={u["user_id"]: User(**u) for u in data["users"]},
        experiments=experiments,
        assignments=frozenset(tuple(a) for a in data["assignments"]),
        role_scopes={
            (r["experiment"], r["role"]): frozenset(parse_scope(s) for s in r["scopes"]) for r in data["role_scopes"]
        },
        issuer_assignments={name: e.issuer for name, e in experiments.items()},
        serial=data["serial"],
    )
    state.check()
    return state
