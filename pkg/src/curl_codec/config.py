"""Run configuration and the indoor/outdoor presets.

Precedence, lowest first: built-in defaults, profile preset, JSON config
file, explicit overrides (CLI flags).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .codec import EncoderConfig, RefinementConfig
from .geometry import SensorModel
from .masks import INDOOR_THRESHOLDS, OUTDOOR_THRESHOLDS, CliffThresholds
from .reconstruct import ReconstructionRequest

PROFILES = {
    "indoor": dict(
        channels=64, row_rate=2, col_rate=2,
        cliff_h=INDOOR_THRESHOLDS.horizontal,
        cliff_v=INDOOR_THRESHOLDS.vertical,
        cliff_d=INDOOR_THRESHOLDS.diagonal,
        patch_size=4, r_row=1.0, r_col=1.0, error_threshold=0.01,
    ),
    "outdoor": dict(
        channels=64, row_rate=2, col_rate=2,
        cliff_h=OUTDOOR_THRESHOLDS.horizontal,
        cliff_v=OUTDOOR_THRESHOLDS.vertical,
        cliff_d=OUTDOOR_THRESHOLDS.diagonal,
        patch_size=4, r_row=1.0, r_col=1.0, error_threshold=0.05,
    ),
}


@dataclass(frozen=True)
class Config:
    profile: str = "outdoor"
    vertical_fov_deg: float = 33.2
    horizontal_fov_deg: float = 360.0
    channels: int = 64
    horizontal_bins: int = 1024
    row_rate: int = 2
    col_rate: int = 2
    cliff_h: float = 2.0
    cliff_v: float = 0.2
    cliff_d: float = 2.0
    patch_size: int = 4
    extend: int | None = None
    r_row: float = 1.0
    r_col: float = 1.0
    apply_masks: bool = True
    k: float = 9.0
    error_threshold: float = 0.05
    degree_min: int = 0
    degree_max: int = 64
    rcond: float | None = None
    threads: int = 1

    def sensor(self) -> SensorModel:
        return SensorModel(
            math.radians(self.vertical_fov_deg), self.channels, self.horizontal_bins,
            math.radians(self.horizontal_fov_deg), self.row_rate, self.col_rate,
        )

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(
            thresholds=CliffThresholds(self.cliff_h, self.cliff_v, self.cliff_d),
            patch_size=self.patch_size,
            extend=self.extend,
            refinement=RefinementConfig(
                self.k, self.error_threshold, self.degree_min, self.degree_max, self.rcond
            ),
            threads=self.threads,
        )

    def request(self) -> ReconstructionRequest:
        return ReconstructionRequest(self.r_row, self.r_col, self.apply_masks)

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name for f in fields(Config)}


def _check_keys(d: dict, where: str) -> None:
    unknown = set(d) - _FIELDS
    if unknown:
        raise ValueError(f"unknown config keys in {where}: {', '.join(sorted(unknown))}")


def load_config(profile: str | None = None, path=None, overrides: dict | None = None) -> Config:
    """Resolve a ``Config``; ``None`` override values are ignored."""
    file_vals = {}
    if path is not None:
        file_vals = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(file_vals, dict):
            raise ValueError(f"{path}: config file must hold a JSON object")
        _check_keys(file_vals, str(path))
    flag_vals = {k: v for k, v in (overrides or {}).items() if v is not None}
    _check_keys(flag_vals, "overrides")
    name = flag_vals.get("profile") or profile or file_vals.get("profile") or Config.profile
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    cfg = replace(Config(), profile=name, **PROFILES[name])
    merged = {**file_vals, **flag_vals}
    merged.pop("profile", None)
    return replace(cfg, **merged)
