"""Differentiable training losses on NCHW tensors.

``ssim_map`` uses an 11x11 Gaussian window (sigma 1.5), reflection padding and
the unit-dynamic-range constants c1 = 0.01**2, c2 = 0.03**2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class SSIMConfig:
    window_size: int = 11
    sigma: float = 1.5
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2

    def window(self, dtype=torch.float64) -> torch.Tensor:
        r = torch.arange(self.window_size, dtype=torch.float64) - (self.window_size - 1) / 2
        g = torch.exp(-(r ** 2) / (2 * self.sigma ** 2))
        w2 = torch.outer(g, g)
        return (w2 / w2.sum()).to(dtype)


DEFAULT_SSIM = SSIMConfig()


def _check_same(a: torch.Tensor, b: torch.Tensor):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def _local_mean(x: torch.Tensor, window: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    pad = window.shape[-1] // 2
    kernel = window.expand(c, 1, *window.shape)
    return F.conv2d(F.pad(x, (pad, pad, pad, pad), mode="reflect"), kernel, groups=c)


def ssim_map(img: torch.Tensor, recon: torch.Tensor, cfg: SSIMConfig = DEFAULT_SSIM) -> torch.Tensor:
    """Per-pixel SSIM averaged over channels; returns shape (N, H, W)."""
    _check_same(img, recon)
    w = cfg.window(img.dtype).to(img.device)
    mu_x = _local_mean(img, w)
    mu_y = _local_mean(recon, w)
    var_x = _local_mean(img * img, w) - mu_x * mu_x
    var_y = _local_mean(recon * recon, w) - mu_y * mu_y
    cov = _local_mean(img * recon, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + cfg.c1) * (2 * cov + cfg.c2)
    den = (mu_x * mu_x + mu_y * mu_y + cfg.c1) * (var_x + var_y + cfg.c2)
    return (num / den).mean(dim=1)


def ssim_loss(img, recon, cfg: SSIMConfig = DEFAULT_SSIM) -> torch.Tensor:
    return (1 - ssim_map(img, recon, cfg)).mean()


def reconstruction_loss(img, recon, lam: float, cfg: SSIMConfig = DEFAULT_SSIM) -> torch.Tensor:
    """lam * mean(1 - SSIM) + mean squared error."""
    _check_same(img, recon)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    mse = F.mse_loss(recon, img)
    if lam == 0:
        return mse
    return lam * ssim_loss(img, recon, cfg) + mse


def focal_loss(logits: torch.Tensor, mask: torch.Tensor, gamma: float) -> torch.Tensor:
    """Two-class focal loss averaged over pixels.

    ``logits`` is (N, 2, H, W) with channel 1 the anomalous class; ``mask`` is
    (N, H, W) or (N, 1, H, W) with values in {0, 1}.
    """
    if logits.dim() != 4 or logits.shape[1] != 2:
        raise ValueError(f"logits must be (N, 2, H, W), got {tuple(logits.shape)}")
    if mask.dim() == 4:
        mask = mask[:, 0]
    if mask.shape != (logits.shape[0],) + tuple(logits.shape[2:]):
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match logits {tuple(logits.shape)}")
    log_p = F.log_softmax(logits, dim=1)
    target = mask.long().unsqueeze(1)
    log_pt = log_p.gather(1, target).squeeze(1)
    if gamma == 0:
        return (-log_pt).mean()
    pt = log_pt.exp()
    return (-((1 - pt) ** gamma) * log_pt).mean()


class LossTerms(NamedTuple):
    total: torch.Tensor
    rec: torch.Tensor
    seg: torch.Tensor


def total_loss(img, recon, logits, mask, lam: float = 1.0, gamma: float = 2.0) -> LossTerms:
    """L = L_rec + L_seg; either term may be skipped by passing ``None`` for its input."""
    zero = img.new_zeros(())
    rec = reconstruction_loss(img, recon, lam) if recon is not None else zero
    seg = focal_loss(logits, mask, gamma) if logits is not None else zero
    return LossTerms(rec + seg, rec, seg)
