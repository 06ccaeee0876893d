"""Layered runtime configuration for the command-line interface.

Settings merge from three layers: a JSON config file, command-line flags,
and ``GYP_``-prefixed environment variables. Environment wins over flags,
flags win over the file, and anything still unset falls back to the
built-in defaults, so a deployment can pin the catalog location without
editing scripts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

from .errors import InvalidConfig

# environment variable that overrides each config field
ENV_NAMES = {
    "catalog_path": "GYP_CATALOG",
    "default_platform": "GYP_DEFAULT_PLATFORM",
    "default_selectivity": "GYP_DEFAULT_SELECTIVITY",
    "default_cost_per_tuple": "GYP_DEFAULT_COST_PER_TUPLE",
    "replication_threshold": "GYP_REPLICATION_THRESHOLD",
    "enable_pushdown": "GYP_ENABLE_PUSHDOWN",
    "enable_reorder": "GYP_ENABLE_REORDER",
    "workers": "GYP_WORKERS",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise InvalidConfig(f"expected a boolean, got {value!r}")


def _to_int(value) -> int:
    if isinstance(value, bool):
        raise InvalidConfig(f"expected an integer, got {value!r}")
    try:
        return int(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"expected an integer, got {value!r}") from None


def _to_float(value) -> float:
    if isinstance(value, bool):
        raise InvalidConfig(f"expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"expected a number, got {value!r}") from None


_COERCERS = {
    "catalog_path": str,
    "default_platform": str,
    "default_selectivity": _to_float,
    "default_cost_per_tuple": _to_float,
    "replication_threshold": _to_int,
    "enable_pushdown": _to_bool,
    "enable_reorder": _to_bool,
    "workers": _to_int,
}


@dataclass(frozen=True)
class Config:
    """Resolved settings shared by every subcommand."""

    catalog_path: str = "catalog.ndjson"
    default_platform: str = "local"
    default_selectivity: float = 1.0
    default_cost_per_tuple: float = 1e-6
    replication_threshold: int = 3
    enable_pushdown: bool = True
    enable_reorder: bool = True
    workers: int | None = None

    def validated(self) -> "Config":
        if self.default_selectivity <= 0.0:
            raise InvalidConfig("default_selectivity must be positive")
        if self.default_cost_per_tuple <= 0.0:
            raise InvalidConfig("default_cost_per_tuple must be positive")
        if self.replication_threshold <= 0:
            raise InvalidConfig("replication_threshold must be positive")
        if self.workers is not None and self.workers < 1:
            raise InvalidConfig("workers must be at least 1")
        parent = os.path.dirname(os.path.abspath(self.catalog_path)) or "."
        if not os.path.isdir(parent):
            raise InvalidConfig(f"catalog directory does not exist: {parent}")
        return self

    def to_json(self) -> dict:
        return {
            "catalog_path": self.catalog_path,
            "default_platform": self.default_platform,
            "default_selectivity": self.default_selectivity,
            "default_cost_per_tuple": self.default_cost_per_tuple,
            "replication_threshold": self.replication_threshold,
            "enable_pushdown": self.enable_pushdown,
            "enable_reorder": self.enable_reorder,
            "workers": self.workers,
        }


def _coerce(key: str, value):
    if key not in _COERCERS:
        raise InvalidConfig(f"unknown config key {key!r}")
    return _COERCERS[key](value)


def load_config(
    path: str | None = None,
    flags: dict | None = None,
    env: dict | None = None,
) -> Config:
    """Merge file, flag, and environment layers into a validated Config.

    ``flags`` entries with value None are treated as not given. Environment
    overrides beat flags, which beat file values.
    """
    env = os.environ if env is None else env
    values: dict = {}

    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise InvalidConfig(f"cannot read config file {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise InvalidConfig("config file must hold a JSON object")
        for key, value in raw.items():
            values[key] = _coerce(key, value)

    for key, value in (flags or {}).items():
        if key not in _COERCERS:
            raise InvalidConfig(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value

    for key, env_name in ENV_NAMES.items():
        if env_name in env:
            values[key] = _coerce(key, env[env_name])

    return Config(**values).validated()


def with_overrides(config: Config, **overrides) -> Config:
    """A copy of ``config`` with the non-None overrides applied."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **changes).validated() if changes else config
