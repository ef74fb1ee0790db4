"""Report rendering: delimited score files plus matplotlib figures.

Every report path writes the machine-readable artifact (JSON/CSV) and a
PNG figure next to it.  Figures use the Agg backend so runs work headless.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import ConfusionMatrix, MetricsReport
from .raster import MASK_NODATA, Mask, Raster

_SCORE_FIELDS = ("precision", "recall", "f1", "iou", "accuracy")


def write_metrics(report: MetricsReport, out_dir, consistency_f1: float | None = None) -> None:
    """metrics.json + metrics.csv + confusion-matrix figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    if consistency_f1 is not None:
        doc["f1_from_iou"] = consistency_f1
    import json

    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)

    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SCORE_FIELDS + ("tp", "fp", "fn", "tn"))
        writer.writerow(
            [f"{getattr(report, k):.6f}" for k in _SCORE_FIELDS]
            + [report.counts.tp, report.counts.fp, report.counts.fn, report.counts.tn]
        )
    confusion_figure(report.counts, out / "confusion.png")


def write_importances(pairs, out_dir) -> None:
    """importances.csv + horizontal bar figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "importances.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("feature", "importance"))
        for name, weight in pairs:
            writer.writerow((name, f"{float(weight):.9f}"))
    importance_figure(pairs, out / "importances.png")


def confusion_figure(cm: ConfusionMatrix, path) -> None:
    fig, ax = plt.subplots(figsize=(4, 3.5))
    table = np.array([[cm.tp, cm.fn], [cm.fp, cm.tn]], dtype=float)
    ax.imshow(table, cmap="Blues")
    for (i, j), v in np.ndenumerate(table):
        ax.text(j, i, f"{int(v):,}", ha="center", va="center", fontsize=10)
    ax.set_xticks([0, 1], ["flood", "dry"])
    ax.set_yticks([0, 1], ["flood", "dry"])
    ax.set_xlabel("truth")
    ax.set_ylabel("prediction")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def importance_figure(pairs, path) -> None:
    names = [p[0] for p in pairs]
    weights = [float(p[1]) for p in pairs]
    fig, ax = plt.subplots(figsize=(5, 0.5 * len(names) + 1.2))
    pos = np.arange(len(names))
    ax.barh(pos, weights, color="#2c7fb8")
    ax.set_yticks(pos, names)
    ax.invert_yaxis()
    ax.set_xlabel("mean decrease in Gini impurity (normalized)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def mask_figure(mask: Mask, path, title: str = "") -> None:
    """Three-tone rendering: dry, flood, nodata."""
    rgb = np.zeros(mask.values.shape + (3,), dtype=np.float32)
    rgb[mask.values == 0] = (0.85, 0.82, 0.72)
    rgb[mask.values == 1] = (0.12, 0.36, 0.70)
    rgb[mask.values == MASK_NODATA] = (0.5, 0.5, 0.5)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(rgb, interpolation="nearest")
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def quicklook_figure(stack: Raster, path, truth: Mask | None = None) -> None:
    """RGB composite of the stack, optionally with a truth outline panel."""
    try:
        r = stack.band("Red").values
        g = stack.band("Green").values
        b = stack.band("Blue").values
    except Exception:
        r = g = b = stack.grids[0].values
    rgb = np.stack([r, g, b], axis=-1)
    finite = np.isfinite(rgb)
    if finite.any():
        hi = np.nanpercentile(rgb, 99)
        rgb = np.clip(rgb / hi if hi > 0 else rgb, 0, 1)
    rgb = np.nan_to_num(rgb, nan=0.0)

    n_panels = 2 if truth is not None else 1
    fig, axes = plt.subplots(1, n_panels, figsize=(5 * n_panels, 5))
    axes = np.atleast_1d(axes)
    axes[0].imshow(rgb, interpolation="nearest")
    axes[0].set_title("composite")
    axes[0].set_axis_off()
    if truth is not None:
        overlay = rgb.copy()
        overlay[truth.values == 1] = (0.12, 0.36, 0.70)
        axes[1].imshow(overlay, interpolation="nearest")
        axes[1].set_title("flood truth")
        axes[1].set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
