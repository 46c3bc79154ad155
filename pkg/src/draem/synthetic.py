"""Procedural desk-scale data: a grating "product surface" and anomaly-source textures."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .imageio import save_image
from .noisegen import perlin_noise


def grating(size: int, rng: np.random.Generator, angle: float = 0.6, period: float = 8.0,
            jitter: float = 0.02) -> np.ndarray:
    """Oriented sinusoidal grating with a random phase and mild pixel noise."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = np.sin(2 * np.pi * (xx * np.cos(angle) + yy * np.sin(angle)) / period + phase)
    base = np.array([0.55, 0.45, 0.35])
    img = base + 0.25 * wave[..., None] * np.array([1.0, 0.9, 0.8])
    img = img + rng.normal(0.0, jitter, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _two_tone(field: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    a, b = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    return field[..., None] * a + (1 - field[..., None]) * b


def texture(size: int, kind: str, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind == "checker":
        cell = int(rng.integers(3, 12))
        field = ((xx // cell + yy // cell) % 2).astype(np.float64)
    elif kind == "stripes":
        ang, period = rng.uniform(0, np.pi), rng.uniform(3, 16)
        field = 0.5 + 0.5 * np.sign(np.sin(2 * np.pi * (xx * np.cos(ang) + yy * np.sin(ang)) / period))
    elif kind == "blobs":
        g = int(2 ** rng.integers(1, 4))
        field = perlin_noise(size, size, g, g, rng)
    elif kind == "dots":
        period, radius = rng.uniform(5, 14), rng.uniform(1.0, 3.5)
        dx = (xx % period) - period / 2
        dy = (yy % period) - period / 2
        field = (dx * dx + dy * dy < radius * radius).astype(np.float64)
    elif kind == "noise":
        field = rng.uniform(0, 1, (size, size))
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    return np.clip(_two_tone(field, rng), 0, 1).astype(np.float32)


TEXTURE_KINDS = ("checker", "stripes", "blobs", "dots", "noise")


def texture_set(size: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [texture(size, TEXTURE_KINDS[i % len(TEXTURE_KINDS)], rng) for i in range(count)]


def write_textures(directory, textures) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, tex in enumerate(textures):
        p = directory / f"texture_{i:03d}.png"
        save_image(tex, p)
        paths.append(p)
    return paths
