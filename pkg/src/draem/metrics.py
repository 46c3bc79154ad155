"""AUROC, step-wise average precision, and run-level evaluation reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .imageio import DatasetIndex, load_mask


def _as_labeled(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.size} vs {y.size}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(bool)


def roc_auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties counted as 1/2."""
    s, y = _as_labeled(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs at least one positive and one negative")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Sum of (R_k - R_{k-1}) * P_k over thresholds at each distinct score, descending.

    Equal scores enter together, so the result does not depend on input order.
    """
    s, y = _as_labeled(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average_precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    # last index of every run of equal scores
    ends = np.r_[np.nonzero(np.diff(s_sorted))[0], s.size - 1]
    tp_k = tp[ends].astype(np.float64)
    precision = tp_k / (ends + 1)
    recall = tp_k / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class ImageResult:
    path: str
    label: str
    eta: float
    anomaly_map: np.ndarray | None = None


@dataclass
class ScoreReport:
    image_auroc: float
    pixel_auroc: float
    pixel_ap: float
    images: list[ImageResult] = field(default_factory=list)

    HEADER = "# DRAEM evaluation report\n# AP variant: step-wise (non-interpolated), pooled pixels\n"

    def as_text(self) -> str:
        lines = [self.HEADER.rstrip("\n"),
                 f"images: {len(self.images)}",
                 f"image_auroc: {self.image_auroc:.6f}",
                 f"pixel_auroc: {self.pixel_auroc:.6f}",
                 f"pixel_ap: {self.pixel_ap:.6f}"]
        return "\n".join(lines) + "\n"

    def write(self, text_path, table_path) -> None:
        Path(text_path).write_text(self.as_text())
        with open(table_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "label", "eta"])
            for r in self.images:
                w.writerow([r.path, r.label, f"{r.eta:.9f}"])
            w.writerow(["image_auroc", "", f"{self.image_auroc:.9f}"])
            w.writerow(["pixel_auroc", "", f"{self.pixel_auroc:.9f}"])
            w.writerow(["pixel_ap", "", f"{self.pixel_ap:.9f}"])


def evaluate_run(results: list[ImageResult], index: DatasetIndex | None = None,
                 masks: dict[str, np.ndarray] | None = None) -> ScoreReport:
    """Image AUROC over eta; pixel AUROC and AP over all pooled test pixels.

    Ground truth comes from ``masks`` (path -> mask array) when given,
    otherwise from the mask files referenced by ``index``.  Good images
    contribute all-zero masks.
    """
    by_path = {str(item.path): item for item in index.test_items} if index is not None else {}
    masks = masks or {}
    pixel_scores, pixel_labels, etas, image_labels = [], [], [], []
    for r in results:
        if r.anomaly_map is None:
            raise ValueError(f"missing anomaly map for {r.path}")
        amap = np.asarray(r.anomaly_map, dtype=np.float64)
        if r.path in masks:
            gt = np.asarray(masks[r.path])
        elif r.label == "good":
            gt = np.zeros(amap.shape, dtype=np.uint8)
        else:
            item = by_path.get(r.path)
            if item is None or item.mask_path is None:
                raise ValueError(f"missing ground-truth mask for {r.path}")
            gt = load_mask(item.mask_path, amap.shape[0])
        if gt.shape != amap.shape:
            raise ValueError(f"mask shape {gt.shape} does not match map {amap.shape} for {r.path}")
        pixel_scores.append(amap.ravel())
        pixel_labels.append((gt.ravel() > 0).astype(np.uint8))
        etas.append(r.eta)
        image_labels.append(0 if r.label == "good" else 1)

    return ScoreReport(
        image_auroc=roc_auc(etas, image_labels),
        pixel_auroc=roc_auc(np.concatenate(pixel_scores), np.concatenate(pixel_labels)),
        pixel_ap=average_precision(np.concatenate(pixel_scores), np.concatenate(pixel_labels)),
        images=list(results),
    )
