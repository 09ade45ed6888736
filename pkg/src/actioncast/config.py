"""Flat key=value service configuration.

The config file is TOML-like but deliberately minimal: one ``key = value``
per line, ``#`` comments, values parsed as bool/int/float when they look
like one, bare or quoted strings otherwise.  The ``ACF_CONFIG`` environment
variable overrides the config path given to the CLI.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .field import FieldConfig
from .patches import (
    DEFAULT_COLOR_TOL,
    DEFAULT_MARGIN_PX,
    DEFAULT_NCC_THRESHOLD,
    DEFAULT_SIZE_TOL_PX,
)

ENV_CONFIG = "ACF_CONFIG"


class ConfigError(ValueError):
    pass


def parse_value(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    lowered = raw.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = parse_value(value)
    return values


@dataclass
class ServiceConfig:
    """Everything the service and CLI share: paths, thresholds, field law."""

    checkpoint: str | None = None
    vocab: str | None = None
    patch_db: str | None = None
    scenes: str | None = None
    static_dir: str | None = None
    host: str = "127.0.0.1"
    port: int = 8314
    topk: int = 5
    ncc_threshold: float = DEFAULT_NCC_THRESHOLD
    margin_px: int = DEFAULT_MARGIN_PX
    size_tol_px: int = DEFAULT_SIZE_TOL_PX
    color_tol: float = DEFAULT_COLOR_TOL
    field_gain: float = 40.0
    field_softening_px: float = 20.0
    field_max_pull_px: float = 8.0
    field_dead_zone: bool = True
    extras: dict = field(default_factory=dict)

    def field_config(self) -> FieldConfig:
        return FieldConfig(
            gain=self.field_gain,
            softening_px=self.field_softening_px,
            max_pull_px=self.field_max_pull_px,
            dead_zone=self.field_dead_zone,
        )

    @staticmethod
    def from_mapping(values: dict) -> "ServiceConfig":
        known = {f.name for f in fields(ServiceConfig)} - {"extras"}
        config = ServiceConfig()
        extras = {}
        for key, value in values.items():
            if key in known:
                setattr(config, key, value)
            else:
                extras[key] = value
        config.extras = extras
        return config


def load_config(path: str | Path | None) -> ServiceConfig:
    """Load a config file, honoring the ACF_CONFIG env var override."""
    override = os.environ.get(ENV_CONFIG)
    if override:
        path = override
    if path is None:
        return ServiceConfig()
    text = Path(path).read_text(encoding="utf-8")
    return ServiceConfig.from_mapping(parse_config_text(text))
