"""Confusion-matrix accumulation and segmentation scores.

Pixels where either mask is nodata are excluded from every count.  Scores
with a 0/0 quotient are reported as 0 and listed in ``undefined_flags`` so
degenerate inputs still yield a deterministic report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DegenerateInputError, ShapeError
from .raster import Mask

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ShapeError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    iou: float
    accuracy: float
    counts: ConfusionMatrix
    undefined_flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "tn": self.counts.tn,
            },
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "iou": self.iou,
            "accuracy": self.accuracy,
            "undefined_flags": list(self.undefined_flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def confusion(pred: Mask, truth: Mask) -> ConfusionMatrix:
    """Count tp/fp/fn/tn over the jointly valid pixels."""
    if pred.values.shape != truth.values.shape:
        raise ShapeError("prediction and truth dimensions must match")
    valid = pred.valid() & truth.valid()
    p = pred.values[valid] == 1
    t = truth.values[valid] == 1
    return ConfusionMatrix(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
    )


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def scores(cm: ConfusionMatrix) -> MetricsReport:
    """Precision, recall, F1, IoU, and accuracy from pooled counts."""
    if cm.total < 1:
        raise DegenerateInputError("confusion matrix is empty")
    flags: list[str] = []
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    f1 = _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1", flags)
    iou = _ratio(cm.tp, cm.tp + cm.fp + cm.fn, "iou", flags)
    accuracy = (cm.tp + cm.tn) / cm.total
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        iou=iou,
        accuracy=accuracy,
        counts=cm,
        undefined_flags=tuple(flags),
    )


def f1_from_iou(iou: float) -> float:
    """Consistency identity F1 = 2*IoU / (1 + IoU) for a shared confusion matrix."""
    if not 0.0 <= iou <= 1.0:
        raise ShapeError(f"IoU must lie in [0, 1], got {iou}")
    return 2.0 * iou / (1.0 + iou)
