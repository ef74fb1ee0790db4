"""Tile sampling, stratified pixel sampling, crop extraction, and export.

Rounding contract: wherever a fraction of a count is taken, the count is
``floor(x + 0.5)`` (half rounds up).  The exported dataset directory holds
``manifest.json`` plus ``<id>_x.json/bin`` (features) and ``<id>_y.json/bin``
(labels) per crop; re-importing reproduces every crop bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DegenerateInputError,
    GridFormatError,
    ShapeError,
)
from .raster import (
    MASK_NODATA,
    Mask,
    Raster,
    crop,
    read_grid_file,
    read_mask_file,
    write_grid_file,
    write_mask_file,
)

BAND_SETS = {
    "Optical4": ("Blue", "Green", "Red", "NIR"),
    "Full6": ("Blue", "Green", "Red", "NIR", "Slope", "HAND"),
}

# Crops whose label is at least this fraction nodata are dropped.
MAX_NODATA_FRACTION = 0.95


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class HwmPoint:
    """High-water-mark reference location in map coordinates."""

    id: str
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ShapeError(f"HWM point {self.id!r} has non-finite coordinates")


@dataclass(frozen=True)
class Crop:
    features: Raster
    label: Mask
    source_tile: str
    offset: tuple[int, int]

    def __post_init__(self):
        if (
            self.features.width != self.label.width
            or self.features.height != self.label.height
        ):
            raise ShapeError("crop features and label dimensions must match")

    @property
    def stem(self) -> str:
        x0, y0 = self.offset
        return f"{self.source_tile}_y{y0:05d}_x{x0:05d}"


@dataclass(frozen=True)
class DatasetManifest:
    crop_size: int
    band_set: str
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    split_mode: str = "random"

    def __post_init__(self):
        overlap = set(self.train_ids) & set(self.test_ids)
        if overlap:
            raise ShapeError(f"train/test ids overlap: {sorted(overlap)[:3]}")
        if self.band_set not in BAND_SETS:
            raise ConfigError(f"unknown band_set {self.band_set!r}")

    @property
    def counts(self) -> tuple[int, int]:
        return len(self.train_ids), len(self.test_ids)

    def to_dict(self) -> dict:
        n_train, n_test = self.counts
        return {
            "crop_size": self.crop_size,
            "band_set": self.band_set,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "seed": self.seed,
            "split_mode": self.split_mode,
            "counts": {"n_train": n_train, "n_test": n_test},
        }


def read_hwm_csv(path) -> list[HwmPoint]:
    """Parse a UTF-8 CSV with header ``id,x,y``; row order is preserved."""
    points = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise GridFormatError(f"{path}: empty HWM file") from None
        if [c.strip().lower() for c in header] != ["id", "x", "y"]:
            raise GridFormatError(f"{path}: expected header 'id,x,y', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise GridFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            ident, xs, ys = (c.strip() for c in row)
            try:
                x, y = float(xs), float(ys)
            except ValueError:
                raise GridFormatError(
                    f"{path}: line {lineno}: non-numeric coordinate"
                ) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GridFormatError(f"{path}: line {lineno}: non-finite coordinate")
            points.append(HwmPoint(ident, x, y))
    return points


def sample_tiles(
    scene: Raster, hwm: list[HwmPoint], tile_size: int = 1024
) -> list[tuple[HwmPoint, Raster]]:
    """Extract the tile_size window centered on each HWM point.

    The point's pixel sits at offset floor(tile_size / 2) inside its tile.
    Points whose window would extend beyond the scene are excluded; order
    is preserved and overlapping tiles are all kept.
    """
    if scene.transform is None:
        raise ConfigError("tile sampling needs a georeferenced scene")
    if tile_size > scene.width or tile_size > scene.height:
        raise ShapeError(
            f"tile_size {tile_size} exceeds scene {scene.width}x{scene.height}"
        )
    ox, oy, dx, dy = scene.transform
    half = tile_size // 2
    out = []
    for point in hwm:
        px = math.floor((point.x - ox) / dx)
        py = math.floor((point.y - oy) / dy)
        x0, y0 = px - half, py - half
        if x0 < 0 or y0 < 0 or x0 + tile_size > scene.width or y0 + tile_size > scene.height:
            continue
        out.append((point, crop(scene, x0, y0, tile_size, tile_size)))
    return out


def stratified_pixel_sample(label: Mask, fraction: float, seed: int) -> np.ndarray:
    """Row-major pixel indices sampled per class, preserving prevalence.

    Draws ``round(fraction * n_c)`` pixels uniformly without replacement
    from each class c independently; nodata pixels are never sampled.  The
    result is sorted and deterministic for a given seed.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    flat = label.values.ravel()
    class0 = np.nonzero(flat == 0)[0]
    class1 = np.nonzero(flat == 1)[0]
    if class0.size == 0 or class1.size == 0:
        raise DegenerateInputError("stratified sampling needs both classes present")
    rng = np.random.default_rng(seed)
    picks = []
    for pool in (class0, class1):
        k = round_half_up(fraction * pool.size)
        picks.append(rng.choice(pool, size=k, replace=False))
    return np.sort(np.concatenate(picks))


def make_crops(
    tile_features: Raster,
    tile_label: Mask,
    source_tile: str,
    crop_size: int = 128,
    stride: int = 128,
) -> list[Crop]:
    """Regular grid of crop windows; mostly-nodata labels are dropped.

    Offsets run over {0, stride, 2*stride, ...} in both axes, keeping only
    windows that fit entirely; emission is row-major.
    """
    if stride < 1:
        raise ShapeError(f"stride must be at least 1, got {stride}")
    if tile_features.width < crop_size or tile_features.height < crop_size:
        raise ShapeError(
            f"tile {tile_features.width}x{tile_features.height} smaller than crop {crop_size}"
        )
    if (
        tile_label.width != tile_features.width
        or tile_label.height != tile_features.height
    ):
        raise ShapeError("tile features and label dimensions must match")
    crops = []
    for y0 in range(0, tile_features.height - crop_size + 1, stride):
        for x0 in range(0, tile_features.width - crop_size + 1, stride):
            label = tile_label.crop(x0, y0, crop_size, crop_size)
            nodata_frac = np.count_nonzero(label.values == MASK_NODATA) / label.values.size
            if nodata_frac >= MAX_NODATA_FRACTION:
                continue
            crops.append(
                Crop(
                    features=crop(tile_features, x0, y0, crop_size, crop_size),
                    label=label,
                    source_tile=source_tile,
                    offset=(x0, y0),
                )
            )
    return crops


def _band_set_of(crops: list[Crop]) -> str:
    bands = tuple(crops[0].features.semantics)
    for name, semantics in BAND_SETS.items():
        if bands == semantics:
            return name
    raise ConfigError(f"crop bands {bands} match no known band set")


def split_train_test(
    crops: list[Crop], test_fraction: float, seed: int, spatial: bool = False
) -> DatasetManifest:
    """Random (or tile-blocked) split into train and test ids.

    Random mode permutes crops with the seed and reserves the last
    ``round(n * test_fraction)`` for testing.  Spatial mode assigns whole
    source tiles to the test side until the reserved count is covered,
    trading exact counts for leakage control.
    """
    if len(crops) < 2:
        raise ShapeError("need at least two crops to split")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    stems = [c.stem for c in crops]
    if len(set(stems)) != len(stems):
        raise ShapeError("duplicate crop ids; tiles and offsets must be unique")
    band_set = _band_set_of(crops)
    crop_size = crops[0].features.width
    n_test = round_half_up(len(crops) * test_fraction)
    rng = np.random.default_rng(seed)

    if spatial:
        tiles = sorted({c.source_tile for c in crops})
        order = rng.permutation(len(tiles))
        test_tiles = set()
        covered = 0
        for i in order:
            if covered >= n_test:
                break
            test_tiles.add(tiles[i])
            covered += sum(1 for c in crops if c.source_tile == tiles[i])
        test_ids = tuple(s for c, s in zip(crops, stems) if c.source_tile in test_tiles)
        train_ids = tuple(s for c, s in zip(crops, stems) if c.source_tile not in test_tiles)
        if not train_ids or not test_ids:
            raise DegenerateInputError("spatial split left one side empty; need more tiles")
        mode = "spatial"
    else:
        order = rng.permutation(len(crops))
        permuted = [stems[i] for i in order]
        train_ids = tuple(permuted[: len(crops) - n_test])
        test_ids = tuple(permuted[len(crops) - n_test :])
        mode = "random"

    return DatasetManifest(
        crop_size=crop_size,
        band_set=band_set,
        train_ids=train_ids,
        test_ids=test_ids,
        seed=seed,
        split_mode=mode,
    )


def export_dataset(crops: list[Crop], manifest: DatasetManifest, out_dir) -> None:
    """Write crop pairs plus manifest.json; the manifest lands last."""
    by_stem: dict[str, Crop] = {}
    for c in crops:
        if c.stem in by_stem:
            raise ShapeError(f"duplicate crop id {c.stem!r}")
        by_stem[c.stem] = c
    wanted = list(manifest.train_ids) + list(manifest.test_ids)
    missing = [s for s in wanted if s not in by_stem]
    if missing:
        raise ShapeError(f"manifest references missing crop ids: {missing[:3]}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stem in wanted:
        c = by_stem[stem]
        write_grid_file(c.features, out / f"{stem}_x")
        write_mask_file(c.label, out / f"{stem}_y")
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, sort_keys=True, indent=2)


def read_manifest(dataset_dir) -> DatasetManifest:
    with open(Path(dataset_dir) / "manifest.json", "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    manifest = DatasetManifest(
        crop_size=doc["crop_size"],
        band_set=doc["band_set"],
        train_ids=tuple(doc["train_ids"]),
        test_ids=tuple(doc["test_ids"]),
        seed=doc["seed"],
        split_mode=doc.get("split_mode", "random"),
    )
    n_train, n_test = manifest.counts
    if doc["counts"] != {"n_train": n_train, "n_test": n_test}:
        raise GridFormatError("manifest counts disagree with id lists")
    return manifest


def read_dataset(dataset_dir) -> tuple[DatasetManifest, dict[str, tuple[Raster, Mask]]]:
    """Load every crop referenced by the manifest."""
    manifest = read_manifest(dataset_dir)
    root = Path(dataset_dir)
    pairs = {}
    for stem in list(manifest.train_ids) + list(manifest.test_ids):
        pairs[stem] = (
            read_grid_file(root / f"{stem}_x"),
            read_mask_file(root / f"{stem}_y"),
        )
    return manifest, pairs
