"""Configuration dataclasses, stable hashing, and KEY=VALUE overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from longspoof.noise import NoiseConfig

MODE_MULTI = "multi"
MODE_SINGLE = "single"


class ConfigError(Exception):
    """Bad configuration value or override key."""


@dataclass
class GenerationConfig:
    """Knobs for the generate pipeline; defaults reproduce the recipe."""

    segments_per_long: int = 10
    bonafide_in_spoofed: int = 3
    mode: str = MODE_MULTI
    # Loudness standardization.
    target_db_min: float = -33.0
    target_db_max: float = -23.0
    top_db: float = 60.0
    frame_len: int = 2048
    hop_len: int = 512
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def validate(self) -> None:
        if self.segments_per_long < 1:
            raise ConfigError("segments_per_long must be >= 1")
        if not (0 <= self.bonafide_in_spoofed <= self.segments_per_long):
            raise ConfigError("bonafide_in_spoofed must be in [0, segments_per_long]")
        if self.mode not in (MODE_MULTI, MODE_SINGLE):
            raise ConfigError(f"mode must be {MODE_MULTI!r} or {MODE_SINGLE!r}")
        if self.target_db_min > self.target_db_max:
            raise ConfigError("target_db_min must be <= target_db_max")
        if not (self.frame_len >= self.hop_len >= 1):
            raise ConfigError("need frame_len >= hop_len >= 1")
        if self.noise.snr_min_db > self.noise.snr_max_db:
            raise ConfigError("snr_min_db must be <= snr_max_db")
        self.noise.outcome_weights()


@dataclass
class ResegmentConfig:
    n_seconds: float = 4.0
    stride_seconds: float | None = None  # defaults to n_seconds (no overlap)

    def validate(self) -> None:
        if self.n_seconds < 1.0 / 16000.0:
            raise ConfigError("n_seconds must be at least one sample")
        if self.stride_seconds is not None and self.stride_seconds <= 0:
            raise ConfigError("stride_seconds must be positive")


def config_hash(cfg) -> str:
    """Short stable digest of a config dataclass, embedded in output metadata."""
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _coerce(raw: str, current):
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(raw)
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None:
        return float(raw)
    return raw


def apply_overrides(cfg, assignments: list[str]):
    """Apply "dotted.key=value" overrides in place; types follow the current field."""
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        target = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if not dataclasses.is_dataclass(target) or not hasattr(target, part):
                raise ConfigError(f"unknown config section {part!r} in {key!r}")
            target = getattr(target, part)
        leaf = parts[-1]
        if not dataclasses.is_dataclass(target) or leaf not in {
            f.name for f in dataclasses.fields(target)
        }:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = _coerce(raw, getattr(target, leaf))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
        setattr(target, leaf, value)
    return cfg
