"""Pooled evaluation of a trained model on the manifest's test split."""

from __future__ import annotations

import numpy as np

from .data import ConfigError, load_dataset
from .metrics import confusion_counts, scores_report, write_report
from .predict import _predict_array
from .train import load_model


def evaluate(model_path, dataset_dir, out_path=None, threshold: float | None = None) -> dict:
    model, cfg, mean, std, band_set = load_model(model_path)
    thr = cfg.threshold if threshold is None else threshold
    ds = load_dataset(dataset_dir)
    if ds.band_set != band_set:
        raise ConfigError(f"model was trained on {band_set}, dataset is {ds.band_set}")
    if ds.test_index.size == 0:
        raise ConfigError("dataset has an empty test split")
    counts = np.zeros(4, dtype=np.int64)
    for i in ds.test_index:
        pred = _predict_array(model, ds.features[int(i)].numpy(), mean, std, thr)
        counts += confusion_counts(pred, ds.labels[int(i)].numpy())
    report = scores_report(counts)
    if out_path is not None:
        write_report(report, out_path)
    return report
