"""Pipeline configuration: defaults < flat ``key = value`` file < CLI flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    out_dir: str = "out"
    references: str | None = None
    cache_dir: str | None = None

    backend: str = "mock"
    seed_fixtures: str | None = None
    model: str = "mock"
    endpoint: str | None = None
    api_key_env: str | None = None
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 1.0

    embedder: str = "hashed-local"
    embedding_dim: int = 256
    embedding_model: str | None = None
    embedding_endpoint: str | None = None
    embedding_api_key_env: str | None = None
    embedding_batch_size: int = 64

    eps_aspect: float = 0.5
    eps_evidence: float = 0.21
    min_samples: int = 1
    top_n: int = 8
    damping: float = 0.85
    tolerance: float = 1e-6
    max_iter: int = 200
    max_prompt_aspects: int = 20
    skip_threshold: float = 0.10

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.backend not in ("remote", "mock"):
            raise ConfigError(f"backend must be 'remote' or 'mock', not {self.backend!r}")
        if self.embedder not in ("remote", "hashed-local"):
            raise ConfigError(f"embedder must be 'remote' or 'hashed-local', not {self.embedder!r}")
        checks = [
            (self.eps_aspect > 0, "eps_aspect must be > 0"),
            (self.eps_evidence > 0, "eps_evidence must be > 0"),
            (self.min_samples >= 1, "min_samples must be >= 1"),
            (self.top_n >= 1, "top_n must be >= 1"),
            (0 < self.damping < 1, "damping must be in (0, 1)"),
            (self.tolerance > 0, "tolerance must be > 0"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
            (self.max_prompt_aspects >= 1, "max_prompt_aspects must be >= 1"),
            (0 <= self.skip_threshold <= 1, "skip_threshold must be in [0, 1]"),
            (self.retries >= 1, "retries must be >= 1"),
            (self.backoff >= 0, "backoff must be >= 0"),
            (self.timeout > 0, "timeout must be > 0"),
            (self.embedding_dim >= 1, "embedding_dim must be >= 1"),
            (self.embedding_batch_size >= 1, "embedding_batch_size must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def replace(self, **changes: Any) -> PipelineConfig:
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw: Any) -> Any:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if raw is None or not isinstance(raw, str):
        return raw
    kind = _FIELD_TYPES[key]
    if raw.strip().lower() in ("", "none", "null") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw.strip()


def parse_config_text(text: str) -> dict[str, Any]:
    """``key = value`` per line; ``#`` starts a comment; dashes in keys allowed."""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = _coerce(key, value)
    return values


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        values.update(parse_config_text(text))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    try:
        return PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
