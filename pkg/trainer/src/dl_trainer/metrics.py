"""Pooled confusion counts and the pipeline's metrics.json schema."""

from __future__ import annotations

import json

import numpy as np

from .fgrid import MASK_NODATA


def confusion_counts(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """(tp, fp, fn, tn) over jointly valid pixels."""
    valid = (pred != MASK_NODATA) & (truth != MASK_NODATA)
    p = pred[valid] == 1
    t = truth[valid] == 1
    return np.array(
        [
            int(np.count_nonzero(p & t)),
            int(np.count_nonzero(p & ~t)),
            int(np.count_nonzero(~p & t)),
            int(np.count_nonzero(~p & ~t)),
        ],
        dtype=np.int64,
    )


def scores_report(counts) -> dict:
    """Same shape as the pipeline's metrics.json, 0/0 flagged undefined."""
    tp, fp, fn, tn = (int(v) for v in counts)
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    f1 = ratio(2 * tp, 2 * tp + fp + fn, "f1")
    iou = ratio(tp, tp + fp + fn, "iou")
    total = tp + fp + fn + tn
    return {
        "counts": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "iou": iou,
        "accuracy": (tp + tn) / total if total else 0.0,
        "undefined_flags": flags,
    }


def write_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
