"""Confusion-matrix bookkeeping and IoU / F1 segmentation metrics."""
from __future__ import annotations

import numpy as np

from .errors import DataError

CLASS_NAMES = ("background", "buildings", "woodlands", "water", "roads")


class ConfusionMatrix:
    """C x C pixel-count accumulator; entry (t, p) counts pixels of true class
    t predicted as p. Merging is elementwise addition, so accumulation order
    never matters and evaluation can be sharded freely."""

    def __init__(self, num_classes, counts=None):
        self.num_classes = int(num_classes)
        if counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        else:
            self.counts = np.asarray(counts, dtype=np.int64).copy()
            if self.counts.shape != (self.num_classes, self.num_classes):
                raise DataError("confusion counts must be C x C")
            if (self.counts < 0).any():
                raise DataError("confusion counts must be non-negative")

    def update(self, pred, true):
        pred = np.asarray(pred)
        true = np.asarray(true)
        if pred.shape != true.shape:
            raise DataError(
                f"prediction shape {pred.shape} != label shape {true.shape}")
        c = self.num_classes
        for name, arr in (("prediction", pred), ("label", true)):
            if arr.size and (arr.min() < 0 or arr.max() >= c):
                bad = arr[(arr < 0) | (arr >= c)].flat[0]
                raise DataError(f"{name} value {int(bad)} outside [0, {c})")
        idx = true.astype(np.int64).ravel() * c + pred.astype(np.int64).ravel()
        self.counts += np.bincount(idx, minlength=c * c).reshape(c, c)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise DataError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix)
                and np.array_equal(self.counts, other.counts))

    def _tp_fp_fn(self):
        tp = np.diag(self.counts).astype(np.float64)
        fp = self.counts.sum(axis=0).astype(np.float64) - tp
        fn = self.counts.sum(axis=1).astype(np.float64) - tp
        return tp, fp, fn

    def iou_per_class(self) -> np.ndarray:
        """IoU_c = TP / (TP + FP + FN); NaN where the union is empty (the
        class appears in neither labels nor predictions)."""
        tp, fp, fn = self._tp_fp_fn()
        union = tp + fp + fn
        out = np.full(self.num_classes, np.nan)
        seen = union > 0
        out[seen] = tp[seen] / union[seen]
        return out

    def f1_per_class(self) -> np.ndarray:
        """F1_c = 2 TP / (2 TP + FP + FN); same exclusion rule as IoU."""
        tp, fp, fn = self._tp_fp_fn()
        union = tp + fp + fn
        out = np.full(self.num_classes, np.nan)
        seen = union > 0
        out[seen] = 2.0 * tp[seen] / (2.0 * tp[seen] + fp[seen] + fn[seen])
        return out

    def mean_iou(self) -> float:
        """Macro mean over classes with a non-empty union."""
        vals = self.iou_per_class()
        return float(np.nan) if np.isnan(vals).all() else float(np.nanmean(vals))

    def mean_f1(self) -> float:
        vals = self.f1_per_class()
        return float(np.nan) if np.isnan(vals).all() else float(np.nanmean(vals))


def accumulate_confusion(pred, true, num_classes, cm: ConfusionMatrix | None = None):
    """Accumulate one (prediction, label) pair into a confusion matrix."""
    if cm is None:
        cm = ConfusionMatrix(num_classes)
    return cm.update(pred, true)


def macro_mean(values, exclude=()) -> float:
    """NaN-aware unweighted mean, optionally dropping class indices."""
    vals = np.asarray(values, dtype=np.float64).copy()
    for i in exclude:
        vals[i] = np.nan
    return float(np.nan) if np.isnan(vals).all() else float(np.nanmean(vals))
