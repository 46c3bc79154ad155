"""Perlin-noise and rectangle anomaly masks."""
from __future__ import annotations

import numpy as np

GRID_CHOICES = (1, 2, 4, 8, 16, 32)
THRESHOLD_RANGE = (0.4, 0.8)


def fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def perlin_noise(height: int, width: int, grid_x: int, grid_y: int,
                 rng: np.random.Generator, normalize: bool = True) -> np.ndarray:
    """Single-octave gradient-lattice Perlin noise.

    Pixel ``(i, j)`` sits at lattice coordinate ``(i * grid_y / H, j * grid_x / W)``.
    Unit gradients are drawn as angles ``rng.uniform(0, 2*pi, (grid_y + 1, grid_x + 1))``.
    With ``normalize`` the field is min-max scaled to [0, 1] (all zeros if constant).
    """
    for g, side, name in ((grid_x, width, "grid_x"), (grid_y, height, "grid_y")):
        if g not in GRID_CHOICES:
            raise ValueError(f"{name} must be a power of two in {GRID_CHOICES}, got {g}")
        if g > side:
            raise ValueError(f"{name}={g} exceeds image side {side}")

    angles = rng.uniform(0.0, 2.0 * np.pi, size=(grid_y + 1, grid_x + 1))
    gx, gy = np.cos(angles), np.sin(angles)

    y = np.arange(height) * (grid_y / height)
    x = np.arange(width) * (grid_x / width)
    y0 = np.floor(y).astype(int)
    x0 = np.floor(x).astype(int)
    fy = (y - y0)[:, None]
    fx = (x - x0)[None, :]
    Y0, X0 = y0[:, None], x0[None, :]

    def corner(dy, dx):
        # dot(gradient at node, offset from node to pixel)
        return gx[Y0 + dy, X0 + dx] * (fx - dx) + gy[Y0 + dy, X0 + dx] * (fy - dy)

    u, v = fade(fx), fade(fy)
    top = corner(0, 0) + u * (corner(0, 1) - corner(0, 0))
    bottom = corner(1, 0) + u * (corner(1, 1) - corner(1, 0))
    field = top + v * (bottom - top)

    if not normalize:
        return field
    lo, hi = field.min(), field.max()
    if hi - lo <= 0:
        return np.zeros_like(field)
    return (field - lo) / (hi - lo)


def binarize_mask(field: np.ndarray, threshold: float) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    return (field > threshold).astype(np.uint8)


def random_perlin_mask(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Perlin mask with per-axis grid 2**k (k uniform, capped by image side) and a random threshold."""
    def grid(side):
        choices = [g for g in GRID_CHOICES if g <= side]
        return int(choices[rng.integers(len(choices))])

    gx, gy = grid(width), grid(height)
    field = perlin_noise(height, width, gx, gy, rng)
    return binarize_mask(field, rng.uniform(*THRESHOLD_RANGE))


def rectangle_mask(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Union of 1 to 3 axis-aligned rectangles, sides 10-40% of the image side."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for _ in range(int(rng.integers(1, 4))):
        h = min(height, int(np.ceil(rng.uniform(0.1, 0.4) * height)))
        w = min(width, int(np.ceil(rng.uniform(0.1, 0.4) * width)))
        top = int(rng.integers(0, height - h + 1))
        left = int(rng.integers(0, width - w + 1))
        mask[top:top + h, left:left + w] = 1
    return mask
