"""Joint training loop and batched inference."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .losses import total_loss
from .neural import Adam, ArchitectureSpec, Checkpoint, DraemModel, build_model, checkpoint_save, lr_at
from .rng import derive_rng, derive_torch_seed
from .scoring import anomaly_map_from_logits, image_score, ssim_baseline_map
from .simulate import AnomalySource, generate_training_sample

log = logging.getLogger(__name__)

LOSS_LOG_HEADER = ["step", "epoch", "lr", "loss_rec", "loss_seg", "loss_total"]
CHECKPOINT_NAME = "checkpoint.ckpt"


class NumericFailure(FloatingPointError):
    pass


def arch_from_config(config: RunConfig) -> ArchitectureSpec:
    return ArchitectureSpec(config.base_width, config.depth, config.bottleneck_width)


def to_tensor(images) -> torch.Tensor:
    """Stack (H, W, C) arrays into a float32 NCHW tensor."""
    arr = np.stack([np.asarray(im, dtype=np.float32) for im in images])
    return torch.from_numpy(arr.transpose(0, 3, 1, 2).copy())


def steps_per_epoch(n_images: int, batch_size: int) -> int:
    return math.ceil(n_images / batch_size)


def batch_for_step(step: int, images: list[np.ndarray], source: AnomalySource, config: RunConfig):
    """Simulated (I, I_a, M_a) tensors for a global step; a pure function of the step."""
    spe = steps_per_epoch(len(images), config.batch_size)
    epoch, k = divmod(step, spe)
    order = derive_rng(config.seed, "shuffle", epoch).permutation(len(images))
    picks = order[k * config.batch_size:(k + 1) * config.batch_size]
    samples = [
        generate_training_sample(images[j], source, config,
                                 derive_rng(config.seed, "simulation", step * config.batch_size + i))
        for i, j in enumerate(picks)
    ]
    original = to_tensor([s.original for s in samples])
    augmented = to_tensor([s.augmented for s in samples])
    mask = torch.from_numpy(np.stack([s.mask for s in samples]).astype(np.int64))
    return original, augmented, mask


def compute_losses(model: DraemModel, original, augmented, mask, config: RunConfig):
    recon, logits = model(augmented)
    return total_loss(original, recon, logits, mask, config.lambda_ssim, config.focal_gamma)


@dataclass
class TrainState:
    model: DraemModel
    optimizer: Adam
    step: int = 0
    history: list[dict] = field(default_factory=list)


def init_state(config: RunConfig) -> TrainState:
    model = build_model(arch_from_config(config), config.variant,
                        seed=derive_torch_seed(config.seed, "init"))
    return TrainState(model, Adam(dict(model.named_parameters())))


def state_from_checkpoint(ckpt: Checkpoint) -> TrainState:
    if ckpt.optimizer is None:
        raise ValueError("checkpoint carries no optimizer state; cannot resume")
    return TrainState(ckpt.model, ckpt.optimizer, ckpt.step)


def _format_row(row: dict) -> list[str]:
    return [str(row["step"]), str(row["epoch"])] + [repr(float(row[k])) for k in LOSS_LOG_HEADER[2:]]


def _prepare_log(path: Path, resume_step: int) -> None:
    """Start a fresh log, or keep only rows up to the resume step."""
    if resume_step == 0 or not path.exists():
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(LOSS_LOG_HEADER)
        return
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    kept = [rows[0]] + [r for r in rows[1:] if int(r[0]) <= resume_step]
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(kept)


def train(config: RunConfig, images: list[np.ndarray], source: AnomalySource,
          out_dir=None, state: TrainState | None = None, max_steps: int | None = None) -> TrainState:
    """Train until ``config.epochs`` are done (or ``max_steps`` global steps).

    With ``out_dir`` a loss log and a rolling checkpoint are written; the
    checkpoint is refreshed every ``checkpoint_every`` epochs and at the end.
    """
    torch.use_deterministic_algorithms(True)
    state = state or init_state(config)
    spe = steps_per_epoch(len(images), config.batch_size)
    total = config.epochs * spe if max_steps is None else min(max_steps, config.epochs * spe)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _prepare_log(out / "loss_log.csv", state.step)

    model, opt = state.model, state.optimizer
    model.train()
    while state.step < total:
        step = state.step
        epoch = step // spe
        lr = lr_at(epoch, config.lr, config.milestones)
        original, augmented, mask = batch_for_step(step, images, source, config)
        opt.zero_grad()
        terms = compute_losses(model, original, augmented, mask, config)
        if not torch.isfinite(terms.total):
            raise NumericFailure(f"non-finite loss at step {step + 1}: rec={terms.rec.item()} "
                                 f"seg={terms.seg.item()}")
        terms.total.backward()
        opt.step(lr)
        state.step += 1
        row = {"step": state.step, "epoch": epoch, "lr": lr, "loss_rec": terms.rec.item(),
               "loss_seg": terms.seg.item(), "loss_total": terms.total.item()}
        state.history.append(row)
        if out is not None:
            with open(out / "loss_log.csv", "a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(_format_row(row))
            epoch_done = state.step % spe == 0
            if state.step == total or (epoch_done and (state.step // spe) % config.checkpoint_every == 0):
                checkpoint_save(out / CHECKPOINT_NAME, model, opt, config.to_dict(),
                                state.step, state.step // spe)
        if state.step % 100 == 0:
            log.info("step %d/%d lr %.2e rec %.4f seg %.4f", state.step, total, lr,
                     row["loss_rec"], row["loss_seg"])
    return state


@dataclass
class Prediction:
    anomaly_maps: np.ndarray  # (N, H, W)
    scores: np.ndarray        # eta per image
    reconstructions: np.ndarray | None


@torch.no_grad()
def predict(model: DraemModel, images: list[np.ndarray], filter_size: int,
            baseline: str | None = None, batch_size: int = 16) -> Prediction:
    """Score images with frozen weights.

    ``baseline="ssim"`` scores with the (1 - SSIM)/2 map between the input and
    its reconstruction instead of the discriminative output.
    """
    if baseline not in (None, "ssim"):
        raise ValueError(f"unknown baseline {baseline!r}")
    model.eval()
    maps, recons = [], []
    for i in range(0, len(images), batch_size):
        x = to_tensor(images[i:i + batch_size])
        recon, logits = model(x)
        if baseline == "ssim":
            if recon is None:
                raise ValueError("the ssim baseline needs a reconstructive sub-network")
            maps.append(ssim_baseline_map(x, recon))
        else:
            if logits is None:
                raise ValueError("this model has no discriminative sub-network; use baseline='ssim'")
            maps.append(anomaly_map_from_logits(logits))
        if recon is not None:
            recons.append(recon.numpy().transpose(0, 2, 3, 1))
    amap = np.concatenate(maps)
    scores = np.array([image_score(m, filter_size) for m in amap])
    return Prediction(amap, scores, np.concatenate(recons) if recons else None)
