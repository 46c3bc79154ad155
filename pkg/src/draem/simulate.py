"""Anomaly simulation: mask, augment and opacity-blend a texture into a normal image."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .augment import rand_augment_chain
from .config import AnomalySourceSpec, RunConfig
from .imageio import list_images, load_image, resize_bilinear
from .noisegen import random_perlin_mask, rectangle_mask

MAX_MASK_ATTEMPTS = 5
MAX_AREA_FRACTION = 0.7


@dataclass(frozen=True)
class AnomalySource:
    kind: str
    textures: tuple[Path, ...] = ()

    def __post_init__(self):
        if self.kind not in ("texture_dir", "solid_color"):
            raise ValueError(f"unknown anomaly source kind {self.kind!r}")
        if self.kind == "texture_dir" and not self.textures:
            raise ValueError("texture_dir anomaly source has no textures")

    @classmethod
    def solid_color(cls) -> "AnomalySource":
        return cls("solid_color")

    @classmethod
    def from_dir(cls, directory) -> "AnomalySource":
        textures = tuple(list_images(directory))
        if not textures:
            raise ValueError(f"no texture images found in {directory}")
        return cls("texture_dir", textures)

    @classmethod
    def from_spec(cls, spec: AnomalySourceSpec) -> "AnomalySource":
        if spec.kind == "solid_color":
            return cls.solid_color()
        return cls.from_dir(spec.path)


@dataclass
class TripletSample:
    original: np.ndarray   # I
    augmented: np.ndarray  # I_a
    mask: np.ndarray       # M_a, uint8 {0, 1}
    beta: float
    is_anomalous: bool


@lru_cache(maxsize=256)
def _texture(path: Path, height: int, width: int) -> np.ndarray:
    return resize_bilinear(load_image(path), height, width)


def sample_anomaly_source(source: AnomalySource, height: int, width: int,
                          rng: np.random.Generator, augment: bool = True) -> np.ndarray:
    if source.kind == "solid_color":
        rgb = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
        return np.broadcast_to(rgb, (height, width, 3)).copy()
    path = source.textures[int(rng.integers(len(source.textures)))]
    texture = _texture(path, height, width)
    if augment:
        texture = rand_augment_chain(texture, rng)
    return texture.copy()


def blend_anomaly(image: np.ndarray, source: np.ndarray, mask: np.ndarray, beta: float) -> np.ndarray:
    """I_a = (1 - M) * I + (1 - beta) * (M * I) + beta * (M * A), evaluated literally."""
    if image.shape != source.shape or image.shape[:2] != mask.shape[:2]:
        raise ValueError(f"shape mismatch: {image.shape}, {source.shape}, {mask.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    m = mask.reshape(mask.shape[0], mask.shape[1], 1).astype(image.dtype)
    b = image.dtype.type(beta)
    out = (1 - m) * image + (1 - b) * (m * image) + b * (m * source)
    return np.clip(out, 0.0, 1.0)


def rotate_image(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Bilinear rotation about the centre with mirror-reflection padding."""
    if angle_deg == 0.0:
        return image.copy()
    out = ndimage.rotate(image, angle_deg, axes=(1, 0), reshape=False, order=1, mode="mirror")
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def draw_mask(height: int, width: int, generator: str, rng: np.random.Generator) -> np.ndarray | None:
    """Draw a non-empty mask covering at most 70% of the image, or None after 5 attempts."""
    make = random_perlin_mask if generator == "perlin" else rectangle_mask
    for _ in range(MAX_MASK_ATTEMPTS):
        mask = make(height, width, rng)
        area = mask.mean()
        if 0 < area <= MAX_AREA_FRACTION:
            return mask
    return None


def generate_training_sample(image: np.ndarray, source: AnomalySource, config: RunConfig,
                             rng: np.random.Generator) -> TripletSample:
    h, w = image.shape[:2]
    angle = rng.uniform(-config.rotation_deg, config.rotation_deg) if config.rotation_deg else 0.0
    original = rotate_image(image, angle)
    clean = TripletSample(original, original.copy(), np.zeros((h, w), np.uint8), 0.0, False)

    if rng.uniform() >= config.p_anomaly:
        return clean
    mask = draw_mask(h, w, config.mask_generator, rng)
    if mask is None:
        return clean
    lo, hi = config.beta_range
    beta = float(rng.uniform(lo, hi)) if config.beta_randomized else (lo + hi) / 2
    texture = sample_anomaly_source(source, h, w, rng, augment=config.augment_enabled)
    augmented = blend_anomaly(original, texture.astype(original.dtype), mask, beta)
    return TripletSample(original, augmented, mask, beta, True)
