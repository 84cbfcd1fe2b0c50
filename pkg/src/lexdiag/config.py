"""Application configuration: a YAML file mapped onto typed sections.

Loading is strict. Unknown keys are rejected, every violation is collected
before raising, and the resulting ConfigError lists all of them so a bad
file is fixed in one pass. Credentials never live here: the HTTP LLM
backend reads its bearer token from the environment variable named by
``gateway.token_env``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import yaml

from .errors import ConfigError
from .util import canonical_json, stable_digest

CONFIG_ENV_VAR = "PURL_CONFIG"

# Keys that smell like secrets. Rejected outright with a pointer to the
# environment variable so a token never ends up committed in a config file.
_FORBIDDEN_KEYS = {"token", "api_key", "apikey", "secret", "password", "bearer"}


@dataclass(frozen=True)
class PathsSection:
    corpus: str = "corpus"
    checkpoints: str = "checkpoints"


@dataclass(frozen=True)
class EmbeddingSection:
    provider: str = "test-hash"  # test-hash | http
    dim: int = 64
    seed: int = 0
    url: str = ""
    timeout: float = 10.0
    retries: int = 2


@dataclass(frozen=True)
class GatewaySection:
    backend: str = "scripted-mock"  # scripted-mock | http
    fixtures: str = ""  # fixture file for the scripted backend
    url: str = ""
    token_env: str = "LEXDIAG_LLM_TOKEN"
    temperature: float = 0.8
    top_p: float = 0.9
    max_tokens: int = 4096
    timeout: float = 60.0
    retries: int = 2


@dataclass(frozen=True)
class PuSection:
    conv_layers: int = 2
    mlp_layers: int = 6
    epochs: int = 100
    lr: float = 1e-4
    correction_discount: float = 0.1
    batch_size: int = 2000
    prior: float | None = None  # None: per-case empirical


@dataclass(frozen=True)
class BanditSection:
    hidden: int = 32
    nu: float = 1.0
    kappa: float = 1.0
    horizon: int = 50
    lr: float = 1e-2
    gd_steps: int = 20
    lam: float = 0.5


@dataclass(frozen=True)
class SessionSection:
    n_hop: int = 2
    max_turns: int = 8


@dataclass(frozen=True)
class ServiceSection:
    host: str = "127.0.0.1"
    port: int = 8321
    max_sessions: int = 64


@dataclass(frozen=True)
class AppConfig:
    seed: int = 0
    paths: PathsSection = PathsSection()
    embedding: EmbeddingSection = EmbeddingSection()
    gateway: GatewaySection = GatewaySection()
    pu: PuSection = PuSection()
    bandit: BanditSection = BanditSection()
    session: SessionSection = SessionSection()
    service: ServiceSection = ServiceSection()


# ---------------------------------------------------------------------------
# validation
#
# One row per leaf key: (coercion kind, predicate, predicate description).
# The walker collects a problem per violated row instead of stopping at the
# first, which is what makes CLI diagnostics single-pass.

Check = tuple[str, Callable[[Any], bool] | None, str]

_POSITIVE = (lambda v: v > 0, "must be positive")
_NONNEG = (lambda v: v >= 0, "must be nonnegative")
_UNIT_OPEN = (lambda v: 0.0 < v < 1.0, "must lie strictly between 0 and 1")
_UNIT_CLOSED = (lambda v: 0.0 <= v <= 1.0, "must lie in [0, 1]")


def _choice(*options: str):
    return (lambda v: v in options, "must be one of " + ", ".join(options))


_SCHEMA: dict[str, dict[str, Check]] = {
    "paths": {
        "corpus": ("str", None, ""),
        "checkpoints": ("str", None, ""),
    },
    "embedding": {
        "provider": ("str", *_choice("test-hash", "http")),
        "dim": ("int", *_POSITIVE),
        "seed": ("int", None, ""),
        "url": ("str", None, ""),
        "timeout": ("float", *_POSITIVE),
        "retries": ("int", *_NONNEG),
    },
    "gateway": {
        "backend": ("str", *_choice("scripted-mock", "http")),
        "fixtures": ("str", None, ""),
        "url": ("str", None, ""),
        "token_env": ("str", lambda v: bool(v.strip()), "must be nonempty"),
        "temperature": ("float", *_NONNEG),
        "top_p": ("float", *_UNIT_CLOSED),
        "max_tokens": ("int", *_POSITIVE),
        "timeout": ("float", *_POSITIVE),
        "retries": ("int", *_NONNEG),
    },
    "pu": {
        "conv_layers": ("int", *_POSITIVE),
        "mlp_layers": ("int", *_POSITIVE),
        "epochs": ("int", *_POSITIVE),
        "lr": ("float", *_POSITIVE),
        "correction_discount": ("float", lambda v: 0.0 < v <= 1.0,
                                "must lie in (0, 1]"),
        "batch_size": ("int", *_POSITIVE),
        "prior": ("float?", *_UNIT_OPEN),
    },
    "bandit": {
        "hidden": ("int", *_POSITIVE),
        "nu": ("float", *_POSITIVE),
        "kappa": ("float", *_NONNEG),
        "horizon": ("int", *_POSITIVE),
        "lr": ("float", *_POSITIVE),
        "gd_steps": ("int", *_POSITIVE),
        "lam": ("float", *_UNIT_CLOSED),
    },
    "session": {
        "n_hop": ("int", *_NONNEG),
        "max_turns": ("int", *_POSITIVE),
    },
    "service": {
        "host": ("str", lambda v: bool(v.strip()), "must be nonempty"),
        "port": ("int", lambda v: 1 <= v <= 65535, "must be a port number"),
        "max_sessions": ("int", *_POSITIVE),
    },
}

_SECTION_TYPES = {
    "paths": PathsSection,
    "embedding": EmbeddingSection,
    "gateway": GatewaySection,
    "pu": PuSection,
    "bandit": BanditSection,
    "session": SessionSection,
    "service": ServiceSection,
}


def _coerce(value: Any, kind: str) -> tuple[Any, str | None]:
    """Returns (coerced value, problem description or None)."""
    if kind == "float?":
        if value is None:
            return None, None
        kind = "float"
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return None, f"expected an integer, got {value!r}"
        return value, None
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"expected a number, got {value!r}"
        return float(value), None
    if kind == "str":
        if not isinstance(value, str):
            return None, f"expected a string, got {value!r}"
        return value, None
    raise AssertionError(kind)


def config_from_dict(data: dict) -> AppConfig:
    """Builds an AppConfig from parsed YAML, collecting every violation."""
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError([f"top level must be a mapping, got {type(data).__name__}"])

    sections: dict[str, Any] = {}
    seed = 0
    for key, value in data.items():
        if not isinstance(key, str):
            problems.append(f"{key!r}: keys must be strings")
            continue
        if key == "seed":
            coerced, problem = _coerce(value, "int")
            if problem:
                problems.append(f"seed: {problem}")
            else:
                seed = coerced
            continue
        if key not in _SCHEMA:
            problems.append(f"{key}: unknown key")
            continue
        if not isinstance(value, dict):
            problems.append(f"{key}: expected a mapping of settings")
            continue
        fields: dict[str, Any] = {}
        for sub, sub_value in value.items():
            path = f"{key}.{sub}"
            if not isinstance(sub, str):
                problems.append(f"{path}: keys must be strings")
                continue
            if sub.lower() in _FORBIDDEN_KEYS:
                problems.append(
                    f"{path}: credentials are never read from config files; "
                    "export them via the environment variable instead"
                )
                continue
            if sub not in _SCHEMA[key]:
                problems.append(f"{path}: unknown key")
                continue
            kind, predicate, description = _SCHEMA[key][sub]
            coerced, problem = _coerce(sub_value, kind)
            if problem:
                problems.append(f"{path}: {problem}")
                continue
            if coerced is not None and predicate is not None and not predicate(coerced):
                problems.append(f"{path}: {description}, got {sub_value!r}")
                continue
            fields[sub] = coerced
        sections[key] = fields

    if problems:
        raise ConfigError(problems)

    kwargs: dict[str, Any] = {"seed": seed}
    for name, cls in _SECTION_TYPES.items():
        kwargs[name] = cls(**sections.get(name, {}))
    return AppConfig(**kwargs)


def load_config(path: str | Path | None = None) -> AppConfig:
    """Loads the config file named by ``path`` or the PURL_CONFIG variable.

    With neither present the built-in defaults apply, so every command
    works out of the box against a local layout.
    """
    if path is None:
        env = os.environ.get(CONFIG_ENV_VAR, "").strip()
        path = env or None
    if path is None:
        return AppConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file {path} does not exist"])
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError([f"config file {path} is not valid YAML: {exc}"])
    if data is None:
        data = {}
    return config_from_dict(data)


def config_hash(config: AppConfig) -> str:
    """Short digest of the effective configuration, logged by every run."""
    return stable_digest(canonical_json(dataclasses.asdict(config)))[:12]
