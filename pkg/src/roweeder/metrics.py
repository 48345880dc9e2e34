"""Segmentation scoring: confusion matrices, per-class/macro F1, and the
intra-row / inter-row decomposition.

Row membership for the decomposition comes from the pipeline's own
detected row mask (no external row annotations exist), which makes the
intra/inter split pipeline-relative; scores must always be read together
with the row mask that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch
from .raster import BACKGROUND, CROP, WEED, BinaryMask, ClassMask

N_CLASSES = 3
CLASS_NAMES = ("background", "crop", "weed")


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[g][p] = pixels with ground-truth class g predicted as p."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES):
            raise DimensionMismatch(f"confusion matrix must be 3x3, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merged(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def empty_confusion() -> ConfusionMatrix:
    return ConfusionMatrix(np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))


@dataclass(frozen=True)
class F1Scores:
    background: float
    crop: float
    weed: float
    macro: float

    def per_class(self) -> tuple[float, float, float]:
        return self.background, self.crop, self.weed

    def as_dict(self) -> dict:
        return {
            "background": self.background,
            "crop": self.crop,
            "weed": self.weed,
            "macro": self.macro,
        }


@dataclass(frozen=True)
class EvalReport:
    """Full-image scores plus the row-partitioned decomposition."""

    full: F1Scores
    intra_row: F1Scores | None = None
    inter_row: F1Scores | None = None

    def as_dict(self) -> dict:
        out = {"full": self.full.as_dict()}
        if self.intra_row is not None:
            out["intra_row"] = self.intra_row.as_dict()
        if self.inter_row is not None:
            out["inter_row"] = self.inter_row.as_dict()
        return out


def confusion(
    pred: ClassMask, gt: ClassMask, selector: BinaryMask | None = None
) -> ConfusionMatrix:
    """Tally ground-truth vs predicted labels, optionally over a pixel subset."""
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    g = gt.labels
    p = pred.labels
    if selector is not None:
        if selector.shape != gt.shape:
            raise DimensionMismatch(f"selector {selector.shape} vs gt {gt.shape}")
        g = g[selector.bits]
        p = p[selector.bits]
    joint = g.astype(np.int64) * N_CLASSES + p.astype(np.int64)
    counts = np.bincount(joint.ravel(), minlength=N_CLASSES * N_CLASSES)
    return ConfusionMatrix(counts.reshape(N_CLASSES, N_CLASSES))


def f1_scores(cm: ConfusionMatrix) -> F1Scores:
    """Per-class and macro F1 from a confusion matrix.

    A class absent from both prediction and ground truth (TP=FP=FN=0)
    scores 1, keeping the macro mean meaningful on tiles lacking a class;
    TP=0 with any FP or FN scores 0.
    """
    counts = cm.counts
    scores = []
    for c in range(N_CLASSES):
        tp = counts[c, c]
        fn = counts[c, :].sum() - tp
        fp = counts[:, c].sum() - tp
        if tp == 0 and fp == 0 and fn == 0:
            scores.append(1.0)
        elif tp == 0:
            scores.append(0.0)
        else:
            scores.append(2.0 * tp / (2.0 * tp + fp + fn))
    macro = float(np.mean(scores))
    return F1Scores(scores[BACKGROUND], scores[CROP], scores[WEED], macro)


def dilate_mask(mask: BinaryMask, radius: int) -> BinaryMask:
    """Binary dilation with a euclidean disk of the given pixel radius."""
    if radius <= 0:
        return mask
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    disk = dy * dy + dx * dx <= radius * radius
    return BinaryMask(ndimage.binary_dilation(mask.bits, structure=disk))


def row_partition_selectors(
    row_mask: BinaryMask, dilate_px: int = 2
) -> tuple[BinaryMask, BinaryMask]:
    """(intra, inter) pixel selectors: the row mask dilated by the row
    thickness, and its complement. Together they cover every pixel."""
    intra = dilate_mask(row_mask, dilate_px)
    inter = BinaryMask(~intra.bits)
    return intra, inter


def row_partitioned_f1(
    pred: ClassMask, gt: ClassMask, row_mask: BinaryMask, dilate_px: int = 2
) -> tuple[F1Scores, F1Scores]:
    """(intra_row, inter_row) F1 triples over the row-band partition.

    The two selectors partition the image, so the intra and inter
    confusion matrices sum exactly to the full-image matrix.
    """
    if row_mask.shape != gt.shape:
        raise DimensionMismatch(f"row mask {row_mask.shape} vs gt {gt.shape}")
    intra_sel, inter_sel = row_partition_selectors(row_mask, dilate_px)
    intra = f1_scores(confusion(pred, gt, intra_sel))
    inter = f1_scores(confusion(pred, gt, inter_sel))
    return intra, inter


def evaluate_masks(
    pred: ClassMask,
    gt: ClassMask,
    row_mask: BinaryMask | None = None,
    dilate_px: int = 2,
) -> EvalReport:
    """Score one prediction; the row decomposition is included when a row
    mask is available."""
    full = f1_scores(confusion(pred, gt))
    if row_mask is None:
        return EvalReport(full=full)
    intra, inter = row_partitioned_f1(pred, gt, row_mask, dilate_px)
    return EvalReport(full=full, intra_row=intra, inter_row=inter)
