"""Reconstructive autoencoder and discriminative U-Net.

Both networks are built from 3x3 conv + BatchNorm + ReLU blocks, halve the
resolution with 2x2 average pooling and double it with bilinear upsampling
followed by a convolution.  Convolutions that feed a BatchNorm carry no bias.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class ArchitectureSpec:
    base_width: int = 16
    depth: int = 3
    bottleneck_width: int = 128
    in_channels: int = 3

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if min(self.base_width, self.bottleneck_width, self.in_channels) < 1:
            raise ValueError("widths must be positive")

    def widths(self) -> list[int]:
        return [self.base_width * 2 ** k for k in range(self.depth)]

    def check_input(self, x: torch.Tensor, channels: int) -> None:
        if x.dim() != 4:
            raise ValueError(f"expected an NCHW tensor, got shape {tuple(x.shape)}")
        if x.shape[1] != channels:
            raise ValueError(f"expected {channels} input channels, got {x.shape[1]}")
        step = 2 ** self.depth
        if x.shape[2] % step or x.shape[3] % step:
            raise ValueError(f"spatial dims {tuple(x.shape[2:])} not divisible by {step}")

    def to_dict(self) -> dict:
        return asdict(self)


def conv_bn_relu(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1, bias=False),
        nn.BatchNorm2d(cout, momentum=0.1),
        nn.ReLU(),
    )


class UpBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv = conv_bn_relu(cin, cout)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.conv(x)


class ReconstructiveNet(nn.Module):
    """Encoder-decoder without skip connections; sigmoid output of the input's shape."""

    def __init__(self, arch: ArchitectureSpec):
        super().__init__()
        self.arch = arch
        widths = arch.widths()
        chans = [arch.in_channels] + widths
        self.encoder = nn.ModuleList(conv_bn_relu(chans[k], chans[k + 1]) for k in range(arch.depth))
        self.bottleneck = conv_bn_relu(widths[-1], arch.bottleneck_width)
        dec = [arch.bottleneck_width] + widths[::-1]
        self.decoder = nn.ModuleList(UpBlock(dec[k], dec[k + 1]) for k in range(arch.depth))
        self.head = nn.Conv2d(widths[0], arch.in_channels, 3, padding=1)

    def forward(self, x):
        self.arch.check_input(x, self.arch.in_channels)
        for block in self.encoder:
            x = F.avg_pool2d(block(x), 2)
        x = self.bottleneck(x)
        for block in self.decoder:
            x = block(x)
        return torch.sigmoid(self.head(x))


class DiscriminativeNet(nn.Module):
    """U-Net producing 2-channel (normal, anomalous) logits at input resolution."""

    def __init__(self, arch: ArchitectureSpec, in_channels: int):
        super().__init__()
        self.arch = arch
        self.in_channels = in_channels
        widths = arch.widths()
        chans = [in_channels] + widths
        self.down = nn.ModuleList(conv_bn_relu(chans[k], chans[k + 1]) for k in range(arch.depth))
        self.bottleneck = conv_bn_relu(widths[-1], arch.bottleneck_width)
        ups, fuses = [], []
        below = arch.bottleneck_width
        for w in reversed(widths):
            ups.append(UpBlock(below, w))
            fuses.append(conv_bn_relu(2 * w, w))
            below = w
        self.up = nn.ModuleList(ups)
        self.fuse = nn.ModuleList(fuses)
        self.head = nn.Conv2d(widths[0], 2, 1)

    def forward(self, x):
        self.arch.check_input(x, self.in_channels)
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = F.avg_pool2d(x, 2)
        x = self.bottleneck(x)
        for up, fuse, skip in zip(self.up, self.fuse, reversed(skips)):
            x = fuse(torch.cat([up(x), skip], dim=1))
        return self.head(x)


class DraemModel(nn.Module):
    """Both sub-networks; ``variant`` selects the full model or an ablation.

    * ``draem``: reconstruct, then segment the concatenation [I_r ; I].
    * ``disc_only``: segment the input directly, no reconstruction.
    * ``recon_ae``: reconstruction only (scored with the SSIM baseline).
    """

    def __init__(self, arch: ArchitectureSpec, variant: str = "draem"):
        super().__init__()
        if variant not in ("draem", "disc_only", "recon_ae"):
            raise ValueError(f"unknown variant {variant!r}")
        self.arch = arch
        self.variant = variant
        c = arch.in_channels
        self.reconstructive = ReconstructiveNet(arch) if variant != "disc_only" else None
        self.discriminative = (
            DiscriminativeNet(arch, c if variant == "disc_only" else 2 * c)
            if variant != "recon_ae" else None
        )

    def forward(self, x):
        """Return ``(I_r, logits)``; either may be ``None`` depending on the variant."""
        recon = self.reconstructive(x) if self.reconstructive is not None else None
        logits = None
        if self.discriminative is not None:
            joint = x if recon is None else torch.cat([recon, x], dim=1)
            logits = self.discriminative(joint)
        return recon, logits


def forward_reconstructive(model: DraemModel, x: torch.Tensor) -> torch.Tensor:
    return model.reconstructive(x)


def forward_discriminative(model: DraemModel, joint: torch.Tensor) -> torch.Tensor:
    return model.discriminative(joint)


def backward(loss: torch.Tensor, model: nn.Module) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of a scalar loss for every named parameter."""
    if loss.dim() != 0:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        raise RuntimeError("loss has no recorded computation to differentiate")
    loss.backward()
    return {n: (p.grad if p.grad is not None else torch.zeros_like(p))
            for n, p in model.named_parameters()}


def anomaly_probability(logits: torch.Tensor) -> torch.Tensor:
    return torch.softmax(logits, dim=1)[:, 1]


def build_model(arch: ArchitectureSpec, variant: str = "draem", seed: int = 0) -> DraemModel:
    """Construct a model with weights initialised from a dedicated torch generator."""
    gen = torch.Generator().manual_seed(seed)
    model = DraemModel(arch, variant)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                bound = (6.0 / fan_in) ** 0.5  # He-uniform for ReLU
                module.weight.copy_(torch.rand(module.weight.shape, generator=gen) * 2 * bound - bound)
                if module.bias is not None:
                    module.bias.zero_()
    return model
