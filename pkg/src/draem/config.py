"""Run configuration: a flat YAML mapping with a fixed set of keys."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


VARIANTS = ("draem", "disc_only", "recon_ae")
MASK_GENERATORS = ("perlin", "rectangles")


@dataclass(frozen=True)
class AnomalySourceSpec:
    """Where anomaly textures come from: a texture directory or random solid colours."""

    kind: str = "solid_color"
    path: str | None = None

    @classmethod
    def parse(cls, value: Any) -> "AnomalySourceSpec":
        if isinstance(value, AnomalySourceSpec):
            return value
        if value == "solid_color":
            return cls("solid_color")
        if isinstance(value, dict) and set(value) == {"texture_dir"}:
            return cls("texture_dir", str(value["texture_dir"]))
        if isinstance(value, str) and value.startswith("texture_dir:"):
            return cls("texture_dir", value.split(":", 1)[1])
        raise ConfigError(
            f"anomaly_source must be 'solid_color' or {{texture_dir: <path>}}, got {value!r}"
        )

    def to_yaml(self):
        return "solid_color" if self.kind == "solid_color" else {"texture_dir": self.path}


def default_smoothing_size(image_size: int) -> int:
    """Mean-filter size: 21 at 256 px, scaled linearly, nearest odd, at least 3."""
    scaled = 21 * image_size / 256
    odd = 2 * int(round((scaled - 1) / 2)) + 1
    return max(3, odd)


@dataclass
class RunConfig:
    image_size: int = 64
    lambda_ssim: float = 1.0
    focal_gamma: float = 2.0
    beta_range: tuple[float, float] = (0.1, 1.0)
    p_anomaly: float = 0.5
    smoothing_size: int | None = None  # None: derived from image_size
    epochs: int = 700
    lr: float = 1e-4
    lr_milestones: tuple[int, ...] | None = None  # None: 4/7 and 6/7 of epochs
    seed: int = 0
    anomaly_source: AnomalySourceSpec = field(default_factory=AnomalySourceSpec)
    mask_generator: str = "perlin"
    augment_enabled: bool = True
    beta_randomized: bool = True
    # training plumbing
    batch_size: int = 8
    rotation_deg: float = 45.0
    checkpoint_every: int = 50
    variant: str = "draem"
    # architecture
    base_width: int = 16
    depth: int = 3
    bottleneck_width: int = 128

    def __post_init__(self):
        self.anomaly_source = AnomalySourceSpec.parse(self.anomaly_source)
        self.beta_range = tuple(float(b) for b in self.beta_range)
        if self.lr_milestones is not None:
            self.lr_milestones = tuple(int(m) for m in self.lr_milestones)
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.image_size >= 8, "image_size must be >= 8")
        need(self.lambda_ssim >= 0, "lambda_ssim must be >= 0")
        need(self.focal_gamma >= 0, "focal_gamma must be >= 0")
        lo, hi = self.beta_range if len(self.beta_range) == 2 else (None, None)
        need(lo is not None and 0.0 <= lo <= hi <= 1.0, "beta_range must be [low, high] within [0, 1]")
        need(0.0 <= self.p_anomaly <= 1.0, "p_anomaly must be in [0, 1]")
        if self.smoothing_size is not None:
            need(self.smoothing_size >= 3 and self.smoothing_size % 2 == 1,
                 "smoothing_size must be odd and >= 3")
            need(self.smoothing_size <= self.image_size, "smoothing_size exceeds image_size")
        need(self.epochs >= 1, "epochs must be >= 1")
        need(self.lr > 0, "lr must be positive")
        ms = self.milestones
        need(all(a < b for a, b in zip(ms, ms[1:])), "lr_milestones must be strictly increasing")
        need(all(0 <= m < self.epochs for m in ms), "lr_milestones must lie in [0, epochs)")
        need(self.mask_generator in MASK_GENERATORS, f"mask_generator must be one of {MASK_GENERATORS}")
        need(self.variant in VARIANTS, f"variant must be one of {VARIANTS}")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(self.checkpoint_every >= 1, "checkpoint_every must be >= 1")
        need(0.0 <= self.rotation_deg <= 180.0, "rotation_deg must be in [0, 180]")
        need(self.depth >= 2, "depth must be >= 2")
        need(self.image_size % (2 ** self.depth) == 0, "image_size must be divisible by 2**depth")
        need(self.base_width >= 1 and self.bottleneck_width >= 1, "widths must be positive")

    @property
    def milestones(self) -> tuple[int, ...]:
        if self.lr_milestones is not None:
            return self.lr_milestones
        ms = {round(self.epochs * 4 / 7), round(self.epochs * 6 / 7)}
        return tuple(sorted(m for m in ms if 0 < m < self.epochs))

    @property
    def filter_size(self) -> int:
        return self.smoothing_size or default_smoothing_size(self.image_size)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, AnomalySourceSpec):
                value = value.to_yaml()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, overrides: dict) -> "RunConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return RunConfig.from_dict(merged)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of config fields")
    return RunConfig.from_dict(data)


def parse_override(item: str) -> tuple[str, Any]:
    """Parse ``key=value``; the value is read as a YAML scalar/sequence."""
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}") from exc
