"""Three-stage pipeline orchestration: aggregate, propagate labels, export.

Stage 1 resamples terrain layers onto the spectral grid, computes NDWI and
writes the canonical 7-band stack.  Stage 2 trains the forest on the
expert-annotated tile and predicts masks for every sampled tile.  Stage 3
cuts the tiles into crop pairs labeled by the stage-2 masks and exports
the training dataset.  Every stage is a pure function of its inputs and a
fixed seed, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    BAND_SETS,
    DatasetManifest,
    HwmPoint,
    export_dataset,
    make_crops,
    read_hwm_csv,
    sample_tiles,
    split_train_test,
    stratified_pixel_sample,
)
from .errors import ConfigError, DegenerateInputError, PairingError, SemanticsError
from .forest import (
    Forest,
    ForestParams,
    SampleMatrix,
    fit_forest,
    predict_raster,
    save_forest,
)
from .indices import ndwi
from .metrics import MetricsReport, confusion, f1_from_iou, scores
from .raster import (
    BLUE,
    FEATURE_BANDS,
    GREEN,
    HAND,
    MASK_NODATA,
    NIR,
    RED,
    SLOPE,
    Grid,
    Mask,
    Raster,
    feature_stack,
    read_grid_file,
    read_mask_file,
    resample_bilinear,
    write_grid_file,
    write_mask_file,
)

LOCK_NAME = ".floodmap.lock"


@dataclass(frozen=True)
class DatasetConfig:
    crop_size: int = 128
    stride: int = 128
    test_fraction: float = 0.25
    seed: int = 0
    spatial_split: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    spectral: str
    slope: str
    hand: str
    hwm_csv: str
    output_dir: str
    dem: str | None = None
    expert_mask: str | None = None
    truth_mask: str | None = None
    synthetic: bool = False
    band_set: str = "Full6"
    tile_size: int = 1024
    sample_fraction: float = 0.5
    forest: ForestParams = field(default_factory=ForestParams)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def __post_init__(self):
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigError(
                f"sample_fraction must lie in (0, 1], got {self.sample_fraction}"
            )
        if self.band_set not in BAND_SETS:
            raise ConfigError(f"unknown band_set {self.band_set!r}")
        if self.expert_mask is None and not (self.synthetic and self.truth_mask):
            raise ConfigError(
                "either expert_mask or synthetic mode with a truth_mask is required"
            )

    def validate_inputs(self) -> None:
        paths = [self.spectral, self.slope, self.hand, self.hwm_csv]
        if self.dem:
            paths.append(self.dem)
        if self.expert_mask:
            paths.append(self.expert_mask)
        if self.truth_mask:
            paths.append(self.truth_mask)
        for p in paths:
            header = Path(p)
            if header.suffix not in (".json", ".csv"):
                header = header.with_suffix(".json")
            if not header.exists():
                raise ConfigError(f"input path does not exist: {p}")

    def to_dict(self) -> dict:
        return {
            "spectral": self.spectral,
            "slope": self.slope,
            "hand": self.hand,
            "dem": self.dem,
            "hwm_csv": self.hwm_csv,
            "expert_mask": self.expert_mask,
            "truth_mask": self.truth_mask,
            "synthetic": self.synthetic,
            "band_set": self.band_set,
            "tile_size": self.tile_size,
            "sample_fraction": self.sample_fraction,
            "forest": {
                "n_trees": self.forest.n_trees,
                "mtry": self.forest.mtry,
                "min_samples_split": self.forest.min_samples_split,
                "min_samples_leaf": self.forest.min_samples_leaf,
                "max_depth": self.forest.max_depth,
                "bootstrap": self.forest.bootstrap,
                "seed": self.forest.seed,
            },
            "dataset": {
                "crop_size": self.dataset.crop_size,
                "stride": self.dataset.stride,
                "test_fraction": self.dataset.test_fraction,
                "seed": self.dataset.seed,
                "spatial_split": self.dataset.spatial_split,
            },
            "output_dir": self.output_dir,
        }


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    forest = ForestParams(**doc.get("forest", {}))
    dataset = DatasetConfig(**doc.get("dataset", {}))
    known = {
        "spectral",
        "slope",
        "hand",
        "dem",
        "hwm_csv",
        "expert_mask",
        "truth_mask",
        "synthetic",
        "band_set",
        "tile_size",
        "sample_fraction",
        "output_dir",
    }
    extra = set(doc) - known - {"forest", "dataset"}
    if extra:
        raise ConfigError(f"unknown config fields: {sorted(extra)}")
    missing = {"spectral", "slope", "hand", "hwm_csv", "output_dir"} - set(doc)
    if missing:
        raise ConfigError(f"config lacks required fields: {sorted(missing)}")
    return PipelineConfig(
        forest=forest,
        dataset=dataset,
        **{k: doc[k] for k in known if k in doc},
    )


@contextmanager
def output_lock(output_dir):
    """Single-instance guard per output directory."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory {out} is locked by another run (remove {lock} if stale)"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _single_band(raster: Raster, semantic: str) -> Grid:
    if raster.has_band(semantic):
        return raster.band(semantic)
    if raster.band_count == 1:
        return raster.grids[0]
    raise SemanticsError(
        f"raster has no {semantic!r} band and is not single-band"
    )


def run_stage1_aggregate(config: PipelineConfig) -> Raster:
    """Resample terrain onto the spectral grid, add NDWI, write the stack."""
    spectral = read_grid_file(config.spectral)
    for band in (BLUE, GREEN, RED, NIR):
        if not spectral.has_band(band):
            raise SemanticsError(f"spectral raster lacks the {band} band")
    slope_grid = _single_band(read_grid_file(config.slope), SLOPE)
    hand_grid = _single_band(read_grid_file(config.hand), HAND)

    w, h = spectral.width, spectral.height
    slope_rs = resample_bilinear(slope_grid, w, h)
    hand_rs = resample_bilinear(hand_grid, w, h)
    ndwi_grid = ndwi(spectral.band(GREEN), spectral.band(NIR))

    stack = feature_stack(
        spectral.band(BLUE),
        spectral.band(GREEN),
        spectral.band(RED),
        spectral.band(NIR),
        slope_rs,
        hand_rs,
        ndwi_grid,
        transform=spectral.transform,
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_grid_file(stack, out / "stack")
    return stack


def tile_offset(scene: Raster, tile: Raster) -> tuple[int, int]:
    """Recover a tile's pixel offset inside its parent scene."""
    if scene.transform is None or tile.transform is None:
        raise ConfigError("offset recovery needs georeferenced rasters")
    ox, oy, dx, dy = scene.transform
    tx, ty = tile.transform[0], tile.transform[1]
    return int(round((tx - ox) / dx)), int(round((ty - oy) / dy))


def _tile_stem(index: int, point: HwmPoint) -> str:
    return f"tile_{index:03d}_{point.id}"


@dataclass
class Stage2Result:
    forest: Forest
    tiles: list[tuple[HwmPoint, Raster]]
    masks: list[Mask]
    train_accuracy: float
    heldout_accuracy: float
    n_train_pixels: int
    overlap_fraction: float


def run_stage2_rf(
    config: PipelineConfig,
    stack: Raster,
    expert_mask: Mask,
    threads: int = 1,
) -> Stage2Result:
    """Scale the expert tile into predicted masks for every HWM tile.

    The expert mask annotates the first HWM tile.  Training pixels are a
    stratified sample of the annotated tile; held-out accuracy is measured
    on the unsampled remainder.
    """
    hwm = read_hwm_csv(config.hwm_csv)
    tiles = sample_tiles(stack, hwm, config.tile_size)
    if not tiles:
        raise DegenerateInputError("no HWM tile fits inside the scene")
    expert_tile = tiles[0][1]
    if (
        expert_mask.width != expert_tile.width
        or expert_mask.height != expert_tile.height
    ):
        raise ConfigError(
            "expert mask dimensions do not match the first HWM tile"
        )

    cube = expert_tile.to_array().reshape(expert_tile.band_count, -1).T
    labels_flat = expert_mask.values.ravel()
    sampled = stratified_pixel_sample(
        expert_mask, config.sample_fraction, config.forest.seed
    )
    feat_ok = ~np.isnan(cube).any(axis=1)
    train_idx = sampled[feat_ok[sampled]]
    matrix = SampleMatrix(
        cube[train_idx],
        labels_flat[train_idx],
        feature_names=FEATURE_BANDS,
    )
    forest = fit_forest(matrix, config.forest, threads=threads)

    masks = [predict_raster(forest, tile, threads=threads) for _, tile in tiles]

    expert_pred = masks[0].values.ravel()
    in_sample = np.zeros(labels_flat.size, dtype=bool)
    in_sample[sampled] = True
    valid = (labels_flat != MASK_NODATA) & (expert_pred != MASK_NODATA)
    held = ~in_sample & valid
    trained = in_sample & valid
    heldout_accuracy = (
        float(np.mean(expert_pred[held] == labels_flat[held])) if held.any() else 1.0
    )
    train_accuracy = (
        float(np.mean(expert_pred[trained] == labels_flat[trained]))
        if trained.any()
        else 1.0
    )

    overlap_fraction = _mosaic_overlap(stack, tiles)

    return Stage2Result(
        forest=forest,
        tiles=tiles,
        masks=masks,
        train_accuracy=train_accuracy,
        heldout_accuracy=heldout_accuracy,
        n_train_pixels=int(train_idx.size),
        overlap_fraction=overlap_fraction,
    )


def _mosaic_overlap(stack: Raster, tiles) -> float:
    coverage = np.zeros((stack.height, stack.width), dtype=np.int32)
    for _, tile in tiles:
        x0, y0 = tile_offset(stack, tile)
        coverage[y0 : y0 + tile.height, x0 : x0 + tile.width] += 1
    covered = coverage > 0
    if not covered.any():
        return 0.0
    return float(np.count_nonzero(coverage > 1) / np.count_nonzero(covered))


def mosaic_masks(stack: Raster, tiles, masks: list[Mask]) -> Mask:
    """Scene-sized mosaic of tile predictions; later tiles overwrite."""
    out = np.full((stack.height, stack.width), MASK_NODATA, dtype=np.uint8)
    for (_, tile), mask in zip(tiles, masks):
        x0, y0 = tile_offset(stack, tile)
        out[y0 : y0 + tile.height, x0 : x0 + tile.width] = mask.values
    return Mask(out)


def run_stage3_export(
    config: PipelineConfig,
    tiles,
    rf_masks: list[Mask],
) -> DatasetManifest:
    """Cut tiles into crop pairs labeled by the stage-2 masks and export."""
    band_subset = BAND_SETS[config.band_set]
    crops = []
    for i, ((point, tile), mask) in enumerate(zip(tiles, rf_masks)):
        subset = tile.select(band_subset)
        crops.extend(
            make_crops(
                subset,
                mask,
                source_tile=_tile_stem(i, point),
                crop_size=config.dataset.crop_size,
                stride=config.dataset.stride,
            )
        )
    manifest = split_train_test(
        crops,
        config.dataset.test_fraction,
        config.dataset.seed,
        spatial=config.dataset.spatial_split,
    )
    export_dataset(crops, manifest, Path(config.output_dir) / "dataset")
    return manifest


def run_eval(pred_dir, truth_dir) -> tuple[MetricsReport, float]:
    """Pool confusion counts over stem-matched mask pairs.

    Returns the pooled report plus the F1 implied by the pooled IoU (a
    consistency identity, equal to the reported F1 up to rounding).
    """
    pred_dir, truth_dir = Path(pred_dir), Path(truth_dir)
    pred_stems = {p.stem for p in pred_dir.glob("*.json")}
    truth_stems = {p.stem for p in truth_dir.glob("*.json")}
    if not pred_stems:
        raise PairingError(f"no mask headers found in {pred_dir}")
    if pred_stems != truth_stems:
        only_p = sorted(pred_stems - truth_stems)[:3]
        only_t = sorted(truth_stems - pred_stems)[:3]
        raise PairingError(
            f"stem mismatch between {pred_dir} and {truth_dir}: "
            f"prediction-only {only_p}, truth-only {only_t}"
        )
    total = None
    for stem in sorted(pred_stems):
        cm = confusion(
            read_mask_file(pred_dir / stem),
            read_mask_file(truth_dir / stem),
        )
        total = cm if total is None else total + cm
    report = scores(total)
    return report, f1_from_iou(report.iou)


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------


def _config_hash(config: PipelineConfig) -> str:
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def run_pipeline(config: PipelineConfig, threads: int = 1) -> dict:
    """Execute stages 1-3 (plus eval when truth is available) under a lock."""
    from . import report as report_mod

    config.validate_inputs()
    out = Path(config.output_dir)
    started = time.time()

    with output_lock(out):
        stack = run_stage1_aggregate(config)

        if config.expert_mask:
            expert = read_mask_file(config.expert_mask)
        else:
            truth = read_mask_file(config.truth_mask)
            hwm = read_hwm_csv(config.hwm_csv)
            tiles = sample_tiles(stack, hwm, config.tile_size)
            if not tiles:
                raise DegenerateInputError("no HWM tile fits inside the scene")
            x0, y0 = tile_offset(stack, tiles[0][1])
            expert = truth.crop(x0, y0, config.tile_size, config.tile_size)

        stage2 = run_stage2_rf(config, stack, expert, threads=threads)
        save_forest(stage2.forest, out / "forest.json")

        masks_dir = out / "rf_masks"
        masks_dir.mkdir(exist_ok=True)
        for i, ((point, tile), mask) in enumerate(zip(stage2.tiles, stage2.masks)):
            write_mask_file(mask, masks_dir / _tile_stem(i, point))
        write_mask_file(mosaic_masks(stack, stage2.tiles, stage2.masks), out / "scene_pred")

        report_mod.write_importances(
            list(zip(stage2.forest.feature_names, stage2.forest.importances)), out
        )
        stage2_doc = {
            "train_accuracy": stage2.train_accuracy,
            "heldout_accuracy": stage2.heldout_accuracy,
            "n_train_pixels": stage2.n_train_pixels,
            "n_tiles": len(stage2.tiles),
            "overlap_fraction": stage2.overlap_fraction,
        }
        with open(out / "stage2.json", "w", encoding="utf-8") as fh:
            json.dump(stage2_doc, fh, sort_keys=True, indent=2)

        manifest = run_stage3_export(config, stage2.tiles, stage2.masks)

        eval_doc = None
        if config.truth_mask:
            truth = read_mask_file(config.truth_mask)
            truth_dir = out / "truth_tiles"
            truth_dir.mkdir(exist_ok=True)
            for i, (point, tile) in enumerate(stage2.tiles):
                x0, y0 = tile_offset(stack, tile)
                window = truth.crop(x0, y0, tile.width, tile.height)
                write_mask_file(window, truth_dir / _tile_stem(i, point))
            report, consistency = run_eval(masks_dir, truth_dir)
            report_mod.write_metrics(report, out, consistency_f1=consistency)
            eval_doc = report.to_dict()

        run_doc = {
            "config": config.to_dict(),
            "config_hash": _config_hash(config),
            "version": __version__,
            "threads": threads,
            "started_unix": started,
            "finished_unix": time.time(),
            "stage2": stage2_doc,
            "dataset_counts": dict(
                zip(("n_train", "n_test"), manifest.counts)
            ),
            "eval": eval_doc,
        }
        with open(out / "run.json", "w", encoding="utf-8") as fh:
            json.dump(run_doc, fh, sort_keys=True, indent=2)
        return run_doc
