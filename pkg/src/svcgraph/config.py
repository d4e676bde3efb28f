"""Pipeline configuration: defaults, key=value files, stable hashing.

A config file is plain text, one `key = value` per line, `#` comments and
blank lines ignored.  Every run resolves its full config, writes it next to
the outputs, and stamps artifacts with a short hash of it.  Runtime-only
knobs (worker count, output paths) are deliberately not part of the config,
so artifacts are comparable across execution setups.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass


class ConfigError(ValueError):
    """A config file or override is malformed."""


@dataclass(frozen=True)
class PipelineConfig:
    """Semantic parameters of the whole pipeline."""

    top_fraction: float = 0.9
    kernel_iterations: int = 3
    k_min: int = 2
    k_max: int = 10
    restarts: int = 10
    seed: int = 0
    category: int = 0
    count: int = 1000
    max_depth: int = 20
    depth_cap: int = 6
    size_cap: int = 14
    influence_epsilon: float = 0.05
    strict_contexts: bool = False

    def validate(self) -> None:
        if not 0 < self.top_fraction <= 1:
            raise ConfigError(f"top_fraction must be in (0, 1], got {self.top_fraction}")
        if self.max_depth < 2:
            raise ConfigError(f"max_depth must be >= 2, got {self.max_depth}")
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ConfigError(
                f"cluster range must satisfy 2 <= k_min <= k_max, got {self.k_min}..{self.k_max}"
            )
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        if self.kernel_iterations < 0:
            raise ConfigError(
                f"kernel_iterations must be >= 0, got {self.kernel_iterations}"
            )
        if self.depth_cap < 1 or self.size_cap < 1:
            raise ConfigError("truncation caps must be >= 1")
        if self.influence_epsilon < 0:
            raise ConfigError(
                f"influence_epsilon must be >= 0, got {self.influence_epsilon}"
            )

    def render(self) -> str:
        """Canonical key=value text (field order, repr-stable values)."""
        lines = []
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            lines.append(f"{field.name} = {value}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.render().encode()).hexdigest()[:12]

    def with_overrides(self, **overrides) -> "PipelineConfig":
        cleaned = {key: value for key, value in overrides.items() if value is not None}
        updated = dataclasses.replace(self, **cleaned)
        updated.validate()
        return updated


_FIELD_TYPES = {field.name: field.type for field in dataclasses.fields(PipelineConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    text = raw.strip()
    if kind == "bool":
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: expected {kind}, got {text!r}") from None
    return text


def parse_config(text: str) -> PipelineConfig:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {line_no}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate config key {key!r}")
        values[key] = _coerce(key, raw)
    config = PipelineConfig(**values)
    config.validate()
    return config


def load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as handle:
            return parse_config(handle.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
