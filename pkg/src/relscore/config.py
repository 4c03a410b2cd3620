"""Run configuration: defaults, YAML overrides, content digest.

A config file is a YAML mapping with up to three sections (metric,
generation, provider), each overriding individual defaults. Unknown keys
fail loudly; a silently ignored typo would quietly change an experiment.
The digest covers the effective settings so reports can prove what they
ran with.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from relscore.errors import InputError
from relscore.metrics import MetricConfig
from relscore.pipeline import GenerationConfig
from relscore.prompts import OverlaySpec


@dataclass(frozen=True)
class ProviderSettings:
    """Connection defaults for live backends; flags and env override."""

    endpoint: str | None = None
    backend: str | None = None
    timeout: float = 30.0
    max_in_flight: int = 4
    retry_budget: int = 2
    token: str | None = None


@dataclass(frozen=True)
class ToolConfig:
    metric: MetricConfig = field(default_factory=MetricConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    provider: ProviderSettings = field(default_factory=ProviderSettings)

    def digest(self) -> str:
        """SHA-256 over a canonical JSON dump of the effective settings."""
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _build(cls, raw: dict[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InputError(
            f"unknown {section} config key(s): {', '.join(unknown)}; known: {', '.join(sorted(known))}"
        )
    return cls(**raw)


def _coerce_generation(raw: dict[str, Any]) -> GenerationConfig:
    raw = dict(raw)
    for key in ("blocklist", "no_relation_phrases"):
        if key in raw:
            value = raw[key]
            if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
                raise InputError(f"generation.{key} must be a list of strings")
            raw[key] = tuple(value)
    if "overlay" in raw:
        overlay_raw = raw["overlay"]
        if not isinstance(overlay_raw, dict):
            raise InputError("generation.overlay must be a mapping")
        overlay_raw = dict(overlay_raw)
        for color_key in ("subject_color", "object_color"):
            if color_key in overlay_raw:
                color = overlay_raw[color_key]
                if not isinstance(color, (list, tuple)) or len(color) != 4:
                    raise InputError(f"generation.overlay.{color_key} must be a 4-element RGBA list")
                overlay_raw[color_key] = tuple(int(v) for v in color)
        raw["overlay"] = _build(OverlaySpec, overlay_raw, "generation.overlay")
    return _build(GenerationConfig, raw, "generation")


def load_config(path: str | Path | None = None) -> ToolConfig:
    """Build the effective config, layering a YAML file over defaults."""
    if path is None:
        return ToolConfig()
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InputError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        return ToolConfig()
    if not isinstance(raw, dict):
        raise InputError(f"config file {path} must contain a mapping at top level")
    unknown = sorted(set(raw) - {"metric", "generation", "provider"})
    if unknown:
        raise InputError(
            f"unknown config section(s): {', '.join(unknown)}; "
            "expected metric, generation, provider"
        )
    for section in ("metric", "generation", "provider"):
        if section in raw and not isinstance(raw[section], dict):
            raise InputError(f"config section {section!r} must be a mapping")
    return ToolConfig(
        metric=_build(MetricConfig, raw.get("metric", {}), "metric"),
        generation=_coerce_generation(raw.get("generation", {})),
        provider=_build(ProviderSettings, raw.get("provider", {}), "provider"),
    )
