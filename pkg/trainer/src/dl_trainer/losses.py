"""Smoothed Dice loss with nodata exclusion."""

from __future__ import annotations

import torch

from .fgrid import MASK_NODATA


def dice_loss(pred: torch.Tensor, target: torch.Tensor, smooth: float = 1.0) -> torch.Tensor:
    """1 - (2*sum(p*t) + s) / (sum(p) + sum(t) + s) over valid pixels.

    ``target`` holds {0, 1, 255}; 255 pixels are excluded from every sum.
    Sums pool over the whole tensor (batch-global Dice).
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    valid = target != MASK_NODATA
    p = pred[valid]
    t = target[valid].to(pred.dtype)
    intersection = (p * t).sum()
    denom = p.sum() + t.sum() + smooth
    return 1.0 - (2.0 * intersection + smooth) / denom
