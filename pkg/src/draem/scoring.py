"""Anomaly maps and the image-level score (max of the mean-filtered map)."""
from __future__ import annotations

import numpy as np
import torch
from scipy import ndimage, special

from .losses import ssim_map


def anomaly_map_from_logits(logits) -> np.ndarray:
    """Anomalous-class softmax probability; (N, 2, H, W) -> (N, H, W), or (2, H, W) -> (H, W)."""
    x = np.asarray(logits.detach().cpu() if isinstance(logits, torch.Tensor) else logits, dtype=np.float64)
    if x.ndim == 3:
        return anomaly_map_from_logits(x[None])[0]
    if x.ndim != 4 or x.shape[1] != 2:
        raise ValueError(f"expected 2-channel logits, got shape {x.shape}")
    # two-way softmax == logistic of the logit difference
    return special.expit(x[:, 1] - x[:, 0])


def smooth_map(anomaly_map: np.ndarray, filter_size: int) -> np.ndarray:
    """Uniform mean filter with reflection padding (edge pixel not repeated)."""
    anomaly_map = np.asarray(anomaly_map, dtype=np.float64)
    if anomaly_map.ndim != 2:
        raise ValueError("expected a single (H, W) map")
    if filter_size < 1 or filter_size % 2 == 0:
        raise ValueError("filter size must be a positive odd integer")
    if filter_size > min(anomaly_map.shape[-2:]):
        raise ValueError(f"filter size {filter_size} exceeds map dims {anomaly_map.shape[-2:]}")
    return ndimage.uniform_filter(anomaly_map, size=filter_size, mode="mirror")


def image_score(anomaly_map: np.ndarray, filter_size: int) -> float:
    """eta = max of the mean-filtered anomaly map."""
    return float(smooth_map(anomaly_map, filter_size).max())


def ssim_baseline_map(image, recon) -> np.ndarray:
    """(1 - SSIM) / 2 clamped to [0, 1]; accepts NCHW tensors or (H, W, C) arrays."""
    single = not isinstance(image, torch.Tensor) and np.ndim(image) == 3

    def as_nchw(a):
        if isinstance(a, torch.Tensor):
            return a.detach().double()
        a = np.asarray(a, dtype=np.float64)
        return torch.from_numpy(a.transpose(2, 0, 1)[None].copy())

    x, y = as_nchw(image), as_nchw(recon)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    with torch.no_grad():
        s = ssim_map(x, y).numpy()
    out = np.clip((1.0 - s) / 2.0, 0.0, 1.0)
    return out[0] if single else out
