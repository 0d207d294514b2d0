"""Declarative broker configuration and its diff.

The document is YAML (JSON works too). ``normalize`` fills defaults and
validates; two documents are compared on their normalized form so cosmetic
edits (key order, comments) never register as changes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping
from urllib.parse import urlparse

import yaml

from ..lifetimes import Lifetimes
from ..registry import GeneratedConfig
from .errors import ConfigError
from .secondary import decode_public_key

DEFAULT_RATE_LIMIT = 60
HA_SERVERS = 3
_TOP_LEVEL = {"experiments", "lifetimes", "ha", "defaults"}
_EXPERIMENT_KEYS = {"issuer", "issuer_url", "client_id", "client_secret", "roles", "realm", "rate_limit", "secondary_keys"}


@dataclass(frozen=True)
class ChangeReport:
    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()
    modified: tuple[str, ...] = ()

    def __bool__(self):
        return bool(self.added or self.removed or self.modified)

    def to_dict(self) -> dict:
        return {"added": list(self.added), "removed": list(self.removed), "modified": list(self.modified)}


@dataclass(frozen=True)
class BrokerConfig:
    data: dict = field(repr=False)

    @property
    def experiments(self) -> dict:
        return self.data["experiments"]

    @property
    def lifetimes(self) -> Lifetimes:
        return Lifetimes.from_mapping(self.data.get("lifetimes"))

    def experiment(self, name: str) -> dict | None:
        return self.data["experiments"].get(name)

    def canonical(self) -> bytes:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()

    def sections(self) -> dict[str, object]:
        """Flatten into independently re-initialisable entries keyed by config path."""
        out = {f"experiments/{k}": v for k, v in self.data["experiments"].items()}
        for key in ("lifetimes", "ha", "defaults"):
            if key in self.data:
                out[key] = self.data[key]
        return out


def _fail(msg: str):
    raise ConfigError(msg)


def _is_url(text) -> bool:
    if not isinstance(text, str):
        return False
    parsed = urlparse(text)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


def normalize(doc: Mapping | str | bytes, resolver: Callable[[str], bool] | None = None) -> BrokerConfig:
    if isinstance(doc, (str, bytes)):
        try:
            doc = yaml.safe_load(doc)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config does not parse: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, Mapping):
        _fail("config must be a mapping")
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        _fail(f"unknown config sections: {sorted(unknown)}")

    defaults = dict(doc.get("defaults") or {})
    if set(defaults) - {"rate_limit"}:
        _fail(f"unknown defaults: {sorted(set(defaults) - {'rate_limit'})}")
    default_limit = defaults.get("rate_limit", DEFAULT_RATE_LIMIT)
    if not isinstance(default_limit, int) or default_limit <= 0:
        _fail("defaults.rate_limit must be a positive integer")

    experiments = {}
    for name, entry in (doc.get("experiments") or {}).items():
        where = f"experiments/{name}"
        if not isinstance(entry, Mapping):
            _fail(f"{where} must be a mapping")
        extra = set(entry) - _EXPERIMENT_KEYS
        if extra:
            _fail(f"{where}: unknown keys {sorted(extra)}")
        url = entry.get("issuer_url")
        if not _is_url(url):
            _fail(f"{where}: issuer_url must be an http(s) URL")
        if resolver is not None and not resolver(url):
            _fail(f"{where}: issuer {url} does not resolve")
        for key in ("client_id", "client_secret"):
            if not isinstance(entry.get(key), str) or not entry[key]:
                _fail(f"{where}: {key} is required")
        roles = entry.get("roles")
        if not roles or not all(isinstance(r, str) and r for r in roles):
            _fail(f"{where}: roles must be a non-empty list of names")
        limit = entry.get("rate_limit", default_limit)
        if not isinstance(limit, int) or isinstance(limit, bool) or limit <= 0:
            _fail(f"{where}: rate_limit must be a positive integer")
        keys = dict(entry.get("secondary_keys") or {})
        for principal, pub in keys.items():
            try:
                decode_public_key(pub)
            except ValueError as exc:
                _fail(f"{where}: secondary key for {principal}: {exc}")
        experiments[str(name)] = {
            "issuer": str(entry.get("issuer") or urlparse(url).path.rstrip("/").rsplit("/", 1)[-1] or name),
            "issuer_url": url.rstrip("/"),
            "client_id": entry["client_id"],
            "client_secret": entry["client_secret"],
            "roles": sorted(set(roles)),
            "realm": str(entry.get("realm") or name),
            "rate_limit": limit,
            "secondary_keys": {str(p): k for p, k in sorted(keys.items())},
        }

    data: dict = {"experiments": experiments}
    if doc.get("lifetimes") is not None:
        try:
            data["lifetimes"] = dict(vars(Lifetimes.from_mapping(doc["lifetimes"])))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"lifetimes: {exc}") from None
    if doc.get("ha") is not None:
        servers = (doc["ha"] or {}).get("servers")
        if (
            not isinstance(servers, list)
            or len(servers) != HA_SERVERS
            or len(set(servers)) != HA_SERVERS
            or not all(isinstance(s, str) and s for s in servers)
        ):
            _fail(f"ha.servers must list exactly {HA_SERVERS} distinct servers")
        data["ha"] = {"servers": list(servers)}
    if "defaults" in doc:
        data["defaults"] = {"rate_limit": default_limit}
    return BrokerConfig(data)


def diff(old: BrokerConfig, new: BrokerConfig) -> ChangeReport:
    a, b = old.sections(), new.sections()
    return ChangeReport(
        added=tuple(sorted(set(b) - set(a))),
        removed=tuple(sorted(set(a) - set(b))),
        modified=tuple(sorted(k for k in set(a) & set(b) if a[k] != b[k])),
    )


def broker_document(
    generated: GeneratedConfig | Mapping,
    client_secrets: Mapping[str, str],
    secondary_keys: Mapping[str, Mapping[str, str]] | None = None,
    **extra,
) -> dict:
    """Build a broker config document from registry output.

    ``client_secrets`` maps issuer name to the secret registered at that
    issuer; ``secondary_keys`` maps experiment to ``{principal: public key}``.
    """
    if isinstance(generated, GeneratedConfig):
        issuers, broker = generated.issuers, generated.broker
    else:
        issuers, broker = generated["issuers"], generated["broker"]
    experiments = {}
    for name, entry in broker.items():
        if not entry["roles"]:
            continue
        iss = entry["issuer"]
        experiments[name] = {
            "issuer": iss,
            "issuer_url": entry["issuer_url"],
            "client_id": issuers[iss]["client_id"],
            "client_secret": client_secrets[iss],
            "roles": list(entry["roles"]),
            "realm": entry["realm"],
        }
        keys = (secondary_keys or {}).get(name)
        if keys:
            experiments[name]["secondary_keys"] = dict(keys)
    return {"experiments": experiments, **extra}


def dump(doc: Mapping) -> str:
    return yaml.safe_dump(dict(doc), sort_keys=True)
