"""Mask prediction for crop datasets and whole tiles."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .data import ConfigError, load_dataset
from .fgrid import MASK_NODATA, read_raster, write_mask
from .train import load_model


@torch.no_grad()
def _predict_array(model, cube: np.ndarray, mean, std, threshold: float) -> np.ndarray:
    """cube: (c, h, w) float32 -> {0, 1, 255} uint8 of shape (h, w)."""
    x = torch.from_numpy(cube).unsqueeze(0)
    invalid = torch.isnan(x).any(dim=1)
    x = (x - mean.view(1, -1, 1, 1)) / std.view(1, -1, 1, 1)
    x = torch.nan_to_num(x, nan=0.0)
    prob = model(x)[0, 0]
    out = (prob >= threshold).to(torch.uint8).numpy()
    out[invalid[0].numpy()] = MASK_NODATA
    return out


def predict_dataset(model_path, dataset_dir, out_dir, threshold: float | None = None) -> list[str]:
    """Predict a mask for every crop in the manifest; returns written stems."""
    model, cfg, mean, std, band_set = load_model(model_path)
    thr = cfg.threshold if threshold is None else threshold
    ds = load_dataset(dataset_dir)
    if ds.band_set != band_set:
        raise ConfigError(f"model was trained on {band_set}, dataset is {ds.band_set}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, stem in enumerate(ds.stems):
        mask = _predict_array(model, ds.features[i].numpy(), mean, std, thr)
        write_mask(mask, out / stem)
        written.append(stem)
    return written


def predict_raster(model_path, raster_path, out_path, threshold: float | None = None) -> np.ndarray:
    """Tile a whole raster in non-overlapping crop-size windows.

    Raster dimensions must be multiples of the window size (128).
    """
    model, cfg, mean, std, _ = load_model(model_path)
    thr = cfg.threshold if threshold is None else threshold
    cube, _bands = read_raster(raster_path)
    if cube.shape[0] != cfg.in_channels:
        raise ConfigError(
            f"raster has {cube.shape[0]} bands, model expects {cfg.in_channels}"
        )
    window = 128
    _, h, w = cube.shape
    if h % window or w % window:
        raise ConfigError(f"raster {w}x{h} is not a multiple of the {window}px window")
    out = np.empty((h, w), dtype=np.uint8)
    for y0 in range(0, h, window):
        for x0 in range(0, w, window):
            tile = cube[:, y0 : y0 + window, x0 : x0 + window]
            out[y0 : y0 + window, x0 : x0 + window] = _predict_array(
                model, tile, mean, std, thr
            )
    write_mask(out, out_path)
    return out
