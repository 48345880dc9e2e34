"""Pipeline configuration: one strict JSON schema with CLI overrides.

Defaults are the empirically tuned values the pipeline ships with:
vegetation threshold 0.1, Hough vote threshold 160, angle-uniformity
alpha 0.1, SLIC cluster coefficient 0.005 / compactness 20 / sigma 1,
512-pixel tiles. Unknown keys are rejected rather than ignored so typos
cannot silently change a run.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SEED_ENV_VAR = "ROWEEDER_SEED"


@dataclass
class ChannelConfig:
    red: str = "R"
    green: str = "G"
    blue: str = "B"
    nir: str | None = "NIR"


@dataclass
class VegetationConfig:
    index: str = "ndvi"  # "ndvi" | "exg"
    threshold: float = 0.1


@dataclass
class HoughConfig:
    threshold: int = 160
    theta_step_deg: float = 1.0
    rho_step_px: float = 1.0


@dataclass
class KSConfig:
    alpha: float = 0.1


@dataclass
class RowConfig:
    thickness_px: int = 2


@dataclass
class InstanceConfig:
    source: str = "cc"  # "cc" | "slic"


@dataclass
class SlicConfig:
    cluster_coefficient: float = 0.005
    compactness: float = 20.0
    sigma: float = 1.0


@dataclass
class AlignmentConfig:
    angle_deg: float | None = None  # None: use the map's angle, else estimate


@dataclass
class PipelineConfig:
    seed: int = 0
    tile_size: int = 512
    channels: ChannelConfig = field(default_factory=ChannelConfig)
    vegetation: VegetationConfig = field(default_factory=VegetationConfig)
    hough: HoughConfig = field(default_factory=HoughConfig)
    ks: KSConfig = field(default_factory=KSConfig)
    rows: RowConfig = field(default_factory=RowConfig)
    instances: InstanceConfig = field(default_factory=InstanceConfig)
    slic: SlicConfig = field(default_factory=SlicConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)

    def validate(self) -> "PipelineConfig":
        if self.tile_size < 1:
            raise ConfigError("tile_size must be >= 1")
        if self.vegetation.index not in ("ndvi", "exg"):
            raise ConfigError(f"unknown vegetation index {self.vegetation.index!r}")
        if not -1.0 <= self.vegetation.threshold <= 2.0:
            raise ConfigError("vegetation threshold outside [-1, 2]")
        if self.hough.threshold < 1:
            raise ConfigError("hough threshold must be >= 1")
        if self.hough.theta_step_deg <= 0 or self.hough.theta_step_deg > 90:
            raise ConfigError("hough theta_step_deg must be in (0, 90]")
        if self.hough.rho_step_px <= 0:
            raise ConfigError("hough rho_step_px must be positive")
        if not 0.0 < self.ks.alpha < 1.0:
            raise ConfigError("ks alpha must be in (0, 1)")
        if self.rows.thickness_px < 1:
            raise ConfigError("row thickness must be >= 1")
        if self.instances.source not in ("cc", "slic"):
            raise ConfigError(f"unknown instance source {self.instances.source!r}")
        if self.slic.cluster_coefficient <= 0 or self.slic.cluster_coefficient > 1:
            raise ConfigError("slic cluster_coefficient must be in (0, 1]")
        if self.slic.compactness <= 0:
            raise ConfigError("slic compactness must be positive")
        if self.slic.sigma < 0:
            raise ConfigError("slic sigma must be >= 0")
        if self.alignment.angle_deg is not None and not (
            -180.0 < self.alignment.angle_deg <= 180.0
        ):
            raise ConfigError("alignment angle_deg must be in (-180, 180]")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTION_TYPES = {
    "channels": ChannelConfig,
    "vegetation": VegetationConfig,
    "hough": HoughConfig,
    "ks": KSConfig,
    "rows": RowConfig,
    "instances": InstanceConfig,
    "slic": SlicConfig,
    "alignment": AlignmentConfig,
}


def _build_section(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s) in {path!r}: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> PipelineConfig:
    """Build a validated config from a plain dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            kwargs[key] = value
    try:
        cfg = PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    """Load a config file (or defaults when path is None) and apply the
    ROWEEDER_SEED environment override."""
    if path is None:
        cfg = PipelineConfig()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        cfg = config_from_dict(data)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
    return cfg.validate()
