"""Shared builders for synthetic crop datasets."""

import json
from pathlib import Path

import numpy as np

from dl_trainer.fgrid import write_mask, write_raster

OPTICAL = ["Blue", "Green", "Red", "NIR"]
FULL = OPTICAL + ["Slope", "HAND"]

WATER = {"Blue": 0.30, "Green": 0.35, "Red": 0.18, "NIR": 0.05, "Slope": 2.0, "HAND": 0.5}
LAND = {"Blue": 0.12, "Green": 0.25, "Red": 0.28, "NIR": 0.45, "Slope": 12.0, "HAND": 8.0}


def synthetic_crop(rng, bands, size=128, noise=0.03):
    """A crop with a random blobby flood region and profile-driven bands."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = rng.uniform(0.2, 0.8, 2) * size
    r = rng.uniform(0.15, 0.45) * size
    wobble = rng.uniform(0.5, 2.0)
    label = (
        ((yy - cy) ** 2 + (xx - cx) ** 2)
        < (r * (1 + 0.3 * np.sin(wobble * np.arctan2(yy - cy, xx - cx)))) ** 2
    ).astype(np.uint8)
    cube = np.empty((len(bands), size, size), dtype=np.float32)
    for i, band in enumerate(bands):
        base = np.where(label == 1, WATER[band], LAND[band])
        cube[i] = base + rng.normal(0, noise, (size, size))
    return cube, label


def write_crop_dataset(out_dir, n_train, n_test, bands=OPTICAL, size=128, seed=0, noise=0.03):
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stems = [f"crop_{i:03d}" for i in range(n_train + n_test)]
    for stem in stems:
        cube, label = synthetic_crop(rng, bands, size=size, noise=noise)
        write_raster(cube, bands, out / f"{stem}_x")
        write_mask(label, out / f"{stem}_y")
    manifest = {
        "crop_size": size,
        "band_set": "Optical4" if bands == OPTICAL else "Full6",
        "train_ids": stems[:n_train],
        "test_ids": stems[n_train:],
        "seed": seed,
        "split_mode": "random",
        "counts": {"n_train": n_train, "n_test": n_test},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out
