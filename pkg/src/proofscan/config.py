"""Scan configuration: dataclasses plus a JSON loader.

A scan is fully described by one JSON document. Secrets may be given inline
or as ${ENV_VAR} references resolved at load time so config files can be
committed without credentials in them.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_TRANSPORT_RETRIES = 3
DEFAULT_PER_ENDPOINT_BUDGET = 25
DEFAULT_PER_FAMILY_BUDGET = 500
DEFAULT_BURST_SIZE = 10
DEFAULT_SETTLE_MS = 500
DEFAULT_PARALLEL_FAMILIES = 4

_ENV_REF = re.compile(r"^\$\{([A-Z][A-Z0-9_]*)\}$")


@dataclass(frozen=True)
class SessionSpec:
    """One named principal the scan can act as."""

    name: str
    role: str  # "user" | "admin" | "anonymous"
    username: str | None = None
    password: str | None = None
    api_key: str | None = None


@dataclass(frozen=True)
class LoginFlow:
    """How to turn credentials into a bearer token or cookie."""

    path: str = "/auth/login"
    method: str = "POST"
    username_field: str = "username"
    password_field: str = "password"
    token_path: str = "token"  # dotted path into the JSON login response
    scheme: str = "bearer"  # "bearer" | "cookie"
    cookie_name: str = "session"
    verify_path: str | None = None  # identity probe, expects 2xx with token
    verify_method: str = "GET"


@dataclass(frozen=True)
class CallbackSpec:
    """Out-of-band listener used to prove SSRF fetches."""

    host: str = "127.0.0.1"
    port: int = 0  # 0 lets the listener pick a free port


@dataclass(frozen=True)
class SentinelSpec:
    """A file planted outside the served directory for traversal proof."""

    relative_path: str
    marker: str


@dataclass(frozen=True)
class StateProbe:
    """A read-only endpoint snapshotted before/after stateful attacks."""

    path: str
    session: str  # which session reads it
    json_path: str  # dotted path to the tracked numeric value


@dataclass(frozen=True)
class Budgets:
    per_endpoint: int = DEFAULT_PER_ENDPOINT_BUDGET
    per_family: int = DEFAULT_PER_FAMILY_BUDGET


@dataclass(frozen=True)
class Thresholds:
    """Decision constants for the confirmation rules."""

    diff_distance: float = 0.15
    shell_distance: float = 0.05
    timing_delta_abs_ms: float = 2000.0
    timing_iqr_k: float = 4.0
    timing_baseline_min: int = 5
    timing_attack_min: int = 3


@dataclass
class ScanConfig:
    """Everything one scan run needs."""

    base_url: str
    api_spec: str  # path to an OpenAPI JSON file, or a URL path on the target
    sessions: list[SessionSpec] = field(default_factory=list)
    login: LoginFlow = field(default_factory=LoginFlow)
    out_dir: str = "runs/latest"
    families: list[str] | None = None  # None means the full registry
    scope_extra: list[str] = field(default_factory=list)  # extra allowed origins
    scope_exclude_paths: list[str] = field(default_factory=list)
    timeout_s: float = DEFAULT_TIMEOUT_S
    transport_retries: int = DEFAULT_TRANSPORT_RETRIES
    parallel_families: int = DEFAULT_PARALLEL_FAMILIES
    budgets: Budgets = field(default_factory=Budgets)
    thresholds: Thresholds = field(default_factory=Thresholds)
    burst_size: int = DEFAULT_BURST_SIZE
    settle_ms: int = DEFAULT_SETTLE_MS
    race_attempts: int = 1
    callback: CallbackSpec | None = None
    sentinels: list[SentinelSpec] = field(default_factory=list)
    state_probes: list[StateProbe] = field(default_factory=list)
    mutates_state_overrides: dict[str, bool] = field(default_factory=dict)
    canaries_per_resource: int = 2
    rng_seed: int | None = None

    def secret_values(self) -> list[str]:
        """Every credential string that must never appear in artifacts."""
        out = []
        for s in self.sessions:
            for v in (s.password, s.api_key):
                if v:
                    out.append(v)
        return out


def _resolve_env(value: Any) -> Any:
    if isinstance(value, str):
        m = _ENV_REF.match(value)
        if m:
            name = m.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references undefined env var {name}")
            return os.environ[name]
        return value
    if isinstance(value, list):
        return [_resolve_env(v) for v in value]
    if isinstance(value, dict):
        return {k: _resolve_env(v) for k, v in value.items()}
    return value


def _build(cls, data: dict, where: str):
    fields = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from None


def load_config(path: str | Path) -> ScanConfig:
    """Load, env-resolve, and validate a scan config JSON file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw = _resolve_env(raw)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ScanConfig:
    for key in ("base_url", "api_spec"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")
    data = dict(raw)
    data["sessions"] = [_build(SessionSpec, s, "session") for s in data.get("sessions", [])]
    if "login" in data:
        data["login"] = _build(LoginFlow, data["login"], "login")
    if data.get("callback") is not None:
        data["callback"] = _build(CallbackSpec, data["callback"], "callback")
    data["sentinels"] = [_build(SentinelSpec, s, "sentinel") for s in data.get("sentinels", [])]
    data["state_probes"] = [_build(StateProbe, s, "state_probe") for s in data.get("state_probes", [])]
    if "budgets" in data:
        data["budgets"] = _build(Budgets, data["budgets"], "budgets")
    if "thresholds" in data:
        data["thresholds"] = _build(Thresholds, data["thresholds"], "thresholds")
    cfg = _build(ScanConfig, data, "config")
    _validate(cfg)
    return cfg


def _validate(cfg: ScanConfig) -> None:
    if not cfg.base_url.startswith(("http://", "https://")):
        raise ConfigError(f"base_url must be http(s), got {cfg.base_url!r}")
    names = [s.name for s in cfg.sessions]
    if len(names) != len(set(names)):
        raise ConfigError("session names must be unique")
    for s in cfg.sessions:
        if s.role not in ("user", "admin", "anonymous"):
            raise ConfigError(f"session {s.name!r} has unknown role {s.role!r}")
        if s.role != "anonymous" and not (s.username or s.api_key):
            raise ConfigError(f"session {s.name!r} has no credentials")
    if cfg.login.scheme not in ("bearer", "cookie"):
        raise ConfigError(f"unknown login scheme {cfg.login.scheme!r}")
    if cfg.timeout_s <= 0:
        raise ConfigError("timeout_s must be positive")
    if cfg.budgets.per_endpoint < 1 or cfg.budgets.per_family < 1:
        raise ConfigError("budgets must be at least 1")
    if cfg.burst_size < 2:
        raise ConfigError("burst_size must be at least 2")
    if cfg.race_attempts < 1:
        raise ConfigError("race_attempts must be at least 1")
