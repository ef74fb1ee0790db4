"""Training loop: Dice loss, per-epoch validation, best-checkpoint saving."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .data import (
    BAND_SET_CHANNELS,
    ConfigError,
    UnetConfig,
    band_stats,
    load_dataset,
    prepare_inputs,
)
from .fgrid import MASK_NODATA
from .losses import dice_loss
from .metrics import confusion_counts
from .model import build_unet


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng((seed * 1_000_003 + epoch) & 0xFFFFFFFF).permutation(n)


def _mask_invalid(labels: torch.Tensor, invalid: torch.Tensor) -> torch.Tensor:
    out = labels.clone()
    out[invalid] = MASK_NODATA
    return out


@torch.no_grad()
def _validate(model, x, labels, smooth, threshold):
    model.eval()
    dices = []
    counts = np.zeros(4, dtype=np.int64)
    for i in range(x.shape[0]):
        pred = model(x[i : i + 1])[:, 0]
        target = labels[i : i + 1]
        dices.append(1.0 - float(dice_loss(pred, target, smooth)))
        hard = (pred >= threshold).to(torch.uint8).numpy()[0]
        counts += confusion_counts(hard, target.numpy()[0])
    tp, fp, fn, tn = counts
    iou = tp / (tp + fp + fn) if (tp + fp + fn) else 0.0
    return float(np.mean(dices)) if dices else 0.0, float(iou)


def train(dataset_dir, cfg: UnetConfig, out_dir) -> tuple[Path, dict]:
    """Train on the manifest's train split, validate on the test split.

    Saves the best-validation checkpoint as ``model.pt`` plus
    ``history.json`` (per-epoch train loss, validation Dice and IoU).
    """
    ds = load_dataset(dataset_dir)
    if BAND_SET_CHANNELS[ds.band_set] != cfg.in_channels:
        raise ConfigError(
            f"config expects {cfg.in_channels} channels but dataset is {ds.band_set}"
        )
    if ds.train_index.size == 0:
        raise ConfigError("dataset has no training crops")

    mean, std = band_stats(ds.features, ds.train_index)
    x_all, invalid = prepare_inputs(ds.features, mean, std)
    labels = _mask_invalid(ds.labels, invalid)

    model = build_unet(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    x_train = x_all[ds.train_index]
    y_train = labels[ds.train_index]
    x_val = x_all[ds.test_index]
    y_val = labels[ds.test_index]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_path = out / "model.pt"

    history = {"train_loss": [], "val_dice": [], "val_iou": []}
    best_val = -1.0
    best_state = {k: v.clone() for k, v in model.state_dict().items()}

    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        model.train()
        order = _epoch_order(cfg.seed, epoch, n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            optimizer.zero_grad()
            pred = model(x_train[idx])[:, 0]
            loss = dice_loss(pred, y_train[idx], cfg.dice_smooth)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        train_loss = float(np.mean(losses))

        if x_val.shape[0] > 0:
            val_dice, val_iou = _validate(
                model, x_val, y_val, cfg.dice_smooth, cfg.threshold
            )
        else:
            val_dice, val_iou = 1.0 - train_loss, 0.0
        history["train_loss"].append(train_loss)
        history["val_dice"].append(val_dice)
        history["val_iou"].append(val_iou)

        if val_dice > best_val:
            best_val = val_dice
            best_state = {k: v.clone() for k, v in model.state_dict().items()}

        if (
            cfg.early_stop_train_loss is not None
            and train_loss < cfg.early_stop_train_loss
        ):
            break

    torch.save(
        {
            "state_dict": best_state,
            "config": cfg.to_dict(),
            "band_mean": mean,
            "band_std": std,
            "band_set": ds.band_set,
        },
        model_path,
    )
    with open(out / "history.json", "w", encoding="utf-8") as fh:
        json.dump(history, fh, indent=2)
    return model_path, history


def load_model(model_path) -> tuple[torch.nn.Module, UnetConfig, torch.Tensor, torch.Tensor, str]:
    bundle = torch.load(model_path, map_location="cpu", weights_only=False)
    cfg = UnetConfig(**bundle["config"])
    model = build_unet(cfg)
    model.load_state_dict(bundle["state_dict"])
    model.eval()
    return model, cfg, bundle["band_mean"], bundle["band_std"], bundle["band_set"]
