"""Image loading/saving and MVTec-style dataset indexing.

Images are ``float32`` arrays of shape ``(H, W, C)`` with values in [0, 1];
masks are ``uint8`` arrays of shape ``(H, W)`` holding only 0 and 1.
Grayscale rasters are replicated to three channels on load.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MIN_SIDE = 8


class ImageFormatError(ValueError):
    """Raised for rasters this package cannot ingest."""


class DatasetError(ValueError):
    """Raised when a dataset tree does not follow the expected layout."""


def validate_image(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W, 1|3) image, got shape {img.shape}")
    if img.shape[0] < MIN_SIDE or img.shape[1] < MIN_SIDE:
        raise ValueError(f"image sides must be >= {MIN_SIDE}, got {img.shape[:2]}")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an (H, W, C) array.

    Output pixel ``i`` samples source coordinate ``i * (H_in - 1) / (H_out - 1)``,
    so the four corner pixels are preserved exactly.
    """
    h_in, w_in = img.shape[:2]
    if (h_in, w_in) == (height, width):
        return img.copy()
    src = img.astype(np.float64)

    def axis_weights(n_in, n_out):
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1)) if n_out > 1 else np.zeros(1)
        lo = np.clip(np.floor(pos).astype(int), 0, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis_weights(h_in, height)
    x0, x1, wx = axis_weights(w_in, width)
    rows = src[y0] * (1 - wy)[:, None, None] + src[y1] * wy[:, None, None]
    out = rows[:, x0] * (1 - wx)[None, :, None] + rows[:, x1] * wx[None, :, None]
    return np.clip(out, 0.0, 1.0).astype(img.dtype)


def resize_nearest(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Corner-aligned nearest-neighbour resize for 2-D masks."""
    h_in, w_in = mask.shape[:2]
    if (h_in, w_in) == (height, width):
        return mask.copy()
    ys = np.rint(np.arange(height) * ((h_in - 1) / max(height - 1, 1))).astype(int)
    xs = np.rint(np.arange(width) * ((w_in - 1) / max(width - 1, 1))).astype(int)
    return mask[ys][:, xs]


def _open_8bit(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise ImageFormatError(f"{path}: unsupported mode {mode!r}; need 8-bit L or RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as exc:  # PIL raises a zoo of types for bad files
        raise ImageFormatError(f"{path}: cannot decode image ({exc})") from exc
    if arr.size == 0 or 0 in arr.shape[:2]:
        raise ImageFormatError(f"{path}: zero-sized image")
    return arr


def load_image(path, target_size: int | None = None) -> np.ndarray:
    """Load an 8-bit L/RGB raster as a 3-channel float image in [0, 1]."""
    arr = _open_8bit(path)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    img = arr.astype(np.float32) / np.float32(255.0)
    if target_size is not None:
        img = resize_bilinear(img, target_size, target_size)
    return img


def load_mask(path, target_size: int | None = None) -> np.ndarray:
    """Load a ground-truth mask; any non-zero byte counts as anomalous."""
    arr = _open_8bit(path)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    mask = (arr > 0).astype(np.uint8)
    if target_size is not None:
        mask = resize_nearest(mask, target_size, target_size)
    return mask


def to_bytes(buffer: np.ndarray) -> np.ndarray:
    """Quantise [0, 1] values to bytes with round-half-up."""
    v = np.clip(np.asarray(buffer, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def save_image(buffer: np.ndarray, path) -> None:
    """Write an (H, W), (H, W, 1) or (H, W, 3) buffer as an 8-bit PNG."""
    data = to_bytes(buffer)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
        raise ValueError(f"cannot save buffer of shape {np.shape(buffer)}")
    path = Path(path)
    if not path.parent.is_dir():
        raise OSError(f"directory does not exist: {path.parent}")
    Image.fromarray(data).save(path, format="PNG")


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        return []
    return sorted(
        (p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.name,
    )


@dataclass(frozen=True)
class EvalItem:
    path: Path
    defect_label: str
    mask_path: Path | None = None

    @property
    def is_anomalous(self) -> bool:
        return self.defect_label != "good"


@dataclass
class DatasetIndex:
    class_name: str
    train_good: list[Path]
    test_items: list[EvalItem] = field(default_factory=list)


def _find_mask(gt_dir: Path, image_path: Path) -> Path | None:
    for name in (f"{image_path.stem}_mask.png", f"{image_path.stem}.png"):
        candidate = gt_dir / name
        if candidate.is_file():
            return candidate
    return None


def scan_dataset(root, class_name: str) -> DatasetIndex:
    """Index ``root/class/{train/good, test/<defect>, ground_truth/<defect>}``.

    Defect directories and files are ordered lexicographically, so the result
    does not depend on filesystem enumeration order.
    """
    base = Path(root) / class_name
    if not base.is_dir():
        raise DatasetError(f"class directory not found: {base}")
    train_good = list_images(base / "train" / "good")
    if not train_good:
        raise DatasetError(f"no training images in {base / 'train' / 'good'}")

    items: list[EvalItem] = []
    test_dir = base / "test"
    defects = sorted(d.name for d in test_dir.iterdir() if d.is_dir()) if test_dir.is_dir() else []
    for defect in defects:
        for path in list_images(test_dir / defect):
            if defect == "good":
                items.append(EvalItem(path, defect))
                continue
            mask_path = _find_mask(base / "ground_truth" / defect, path)
            if mask_path is None:
                raise DatasetError(f"missing ground-truth mask for {path}")
            items.append(EvalItem(path, defect, mask_path))
    return DatasetIndex(class_name, train_good, items)
