"""Crop dataset loading and batching against the exported manifest."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .fgrid import MASK_NODATA, read_mask, read_raster

BAND_SET_CHANNELS = {"Optical4": 4, "Full6": 6}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UnetConfig:
    in_channels: int = 4
    batch_size: int = 16
    epochs: int = 50
    learning_rate: float = 1e-3
    dice_smooth: float = 1.0
    threshold: float = 0.5
    seed: int = 0
    early_stop_train_loss: float | None = None

    def __post_init__(self):
        if self.in_channels not in (4, 6):
            raise ConfigError(f"in_channels must be 4 or 6, got {self.in_channels}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")

    @classmethod
    def from_json(cls, path) -> "UnetConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "dice_smooth": self.dice_smooth,
            "threshold": self.threshold,
            "seed": self.seed,
            "early_stop_train_loss": self.early_stop_train_loss,
        }


@dataclass
class CropDataset:
    """All crops in memory: features (n, c, h, w), labels (n, h, w) uint8."""

    features: torch.Tensor
    labels: torch.Tensor
    train_index: np.ndarray
    test_index: np.ndarray
    stems: list[str]
    band_set: str
    crop_size: int

    @property
    def in_channels(self) -> int:
        return self.features.shape[1]


def load_dataset(dataset_dir) -> CropDataset:
    root = Path(dataset_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    band_set = manifest["band_set"]
    if band_set not in BAND_SET_CHANNELS:
        raise ConfigError(f"unknown band_set {band_set!r} in manifest")
    stems = list(manifest["train_ids"]) + list(manifest["test_ids"])
    n_train = len(manifest["train_ids"])

    feats = []
    labels = []
    for stem in stems:
        cube, _ = read_raster(root / f"{stem}_x")
        if cube.shape[0] != BAND_SET_CHANNELS[band_set]:
            raise ConfigError(
                f"{stem}: {cube.shape[0]} bands but manifest says {band_set}"
            )
        feats.append(cube)
        labels.append(read_mask(root / f"{stem}_y"))
    features = torch.from_numpy(np.stack(feats))
    label_tensor = torch.from_numpy(np.stack(labels))
    return CropDataset(
        features=features,
        labels=label_tensor,
        train_index=np.arange(0, n_train),
        test_index=np.arange(n_train, len(stems)),
        stems=stems,
        band_set=band_set,
        crop_size=int(manifest["crop_size"]),
    )


def band_stats(features: torch.Tensor, index: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-band mean/std over the finite pixels of the selected crops."""
    sel = features[index]
    flat = sel.permute(1, 0, 2, 3).reshape(sel.shape[1], -1)
    finite = torch.isfinite(flat)
    mean = torch.empty(flat.shape[0])
    std = torch.empty(flat.shape[0])
    for b in range(flat.shape[0]):
        vals = flat[b][finite[b]]
        mean[b] = vals.mean() if vals.numel() else 0.0
        std[b] = vals.std() if vals.numel() > 1 else 1.0
    std = torch.clamp(std, min=1e-6)
    return mean, std


def prepare_inputs(
    features: torch.Tensor, mean: torch.Tensor, std: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Standardize; NaN pixels become zero input and are flagged invalid."""
    invalid = torch.isnan(features).any(dim=1)
    x = (features - mean.view(1, -1, 1, 1)) / std.view(1, -1, 1, 1)
    x = torch.nan_to_num(x, nan=0.0)
    return x, invalid


def valid_label_mask(labels: torch.Tensor) -> torch.Tensor:
    return labels != MASK_NODATA
