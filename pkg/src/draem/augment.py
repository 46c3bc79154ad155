"""Seven photometric augmentations and a RandAugment-style 3-of-7 chain.

All ops take and return ``(H, W, 3)`` float arrays in [0, 1].  Magnitude
ranges are centred on the identity where one exists.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

KINDS = ("posterize", "sharpness", "solarize", "equalize", "brightness", "color", "auto_contrast")

# (low, high) per kind; None means the op takes no magnitude.
MAGNITUDE_RANGES: dict[str, tuple[float, float] | None] = {
    "posterize": (1, 7),
    "sharpness": (0.0, 2.0),
    "solarize": (0.0, 1.0),
    "equalize": None,
    "brightness": (0.5, 1.5),
    "color": (0.0, 2.0),
    "auto_contrast": None,
}

LUMA = np.array([0.299, 0.587, 0.114])
SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    magnitude: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation {self.kind!r}")
        rng = MAGNITUDE_RANGES[self.kind]
        if rng is None:
            return
        m = self.magnitude
        if m is None or not rng[0] <= m <= rng[1]:
            raise ValueError(f"{self.kind} magnitude {m!r} outside {rng}")
        if self.kind == "posterize" and m != int(m):
            raise ValueError("posterize magnitude must be an integer bit count")


def _to_levels(img):
    return np.floor(np.clip(img, 0, 1) * 255.0 + 0.5).astype(np.int64)


def posterize(img, bits: int):
    keep = (0xFF << (8 - int(bits))) & 0xFF
    return (_to_levels(img) & keep) / 255.0


def sharpness(img, factor: float):
    smooth = np.stack(
        [ndimage.convolve(img[..., c].astype(np.float64), SMOOTH_KERNEL, mode="mirror")
         for c in range(img.shape[2])],
        axis=2,
    )
    return smooth + factor * (img - smooth)


def solarize(img, threshold: float):
    return np.where(img > threshold, 1.0 - img, img)


def equalize(img):
    """Per-channel CDF histogram equalisation on 256 bins."""
    levels = _to_levels(img)
    out = np.empty(img.shape, dtype=np.float64)
    for c in range(img.shape[2]):
        ch = levels[..., c]
        hist = np.bincount(ch.ravel(), minlength=256)
        cdf = np.cumsum(hist)
        cdf_min = cdf[np.nonzero(hist)[0][0]]
        total = cdf[-1]
        if total == cdf_min:  # single level: nothing to spread
            out[..., c] = ch / 255.0
            continue
        lut = np.floor((cdf - cdf_min) * 255.0 / (total - cdf_min) + 0.5)
        out[..., c] = lut[ch] / 255.0
    return out


def brightness(img, factor: float):
    return img * factor


def color(img, factor: float):
    gray = (img @ LUMA)[..., None]
    return gray + factor * (img - gray)


def auto_contrast(img):
    lo = img.min(axis=(0, 1), keepdims=True)
    hi = img.max(axis=(0, 1), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (img - lo) / safe, img)


_FUNCS = {
    "posterize": posterize,
    "sharpness": sharpness,
    "solarize": solarize,
    "brightness": brightness,
    "color": color,
}


def apply_augmentation(op: AugmentOp, image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if op.kind == "equalize":
        out = equalize(img)
    elif op.kind == "auto_contrast":
        out = auto_contrast(img)
    else:
        out = _FUNCS[op.kind](img, op.magnitude)
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def sample_op(kind: str, rng: np.random.Generator) -> AugmentOp:
    bounds = MAGNITUDE_RANGES[kind]
    if bounds is None:
        return AugmentOp(kind)
    if kind == "posterize":
        return AugmentOp(kind, int(rng.integers(bounds[0], bounds[1] + 1)))
    return AugmentOp(kind, float(rng.uniform(*bounds)))


def sample_chain(rng: np.random.Generator, n: int = 3) -> list[AugmentOp]:
    picks = rng.choice(len(KINDS), size=n, replace=False)
    return [sample_op(KINDS[i], rng) for i in picks]


def rand_augment_chain(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = image
    for op in sample_chain(rng):
        out = apply_augmentation(op, out)
    return out
