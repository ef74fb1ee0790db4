"""Command-line entry points.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import (
    BAND_SETS,
    export_dataset,
    make_crops,
    read_hwm_csv,
    sample_tiles,
    split_train_test,
    stratified_pixel_sample,
)
from .errors import FloodmapError, SemanticsError
from .forest import (
    ForestParams,
    SampleMatrix,
    fit_forest,
    load_forest,
    predict_raster,
    save_forest,
)
from .indices import ThresholdDirection, apply_threshold, ndwi, otsu_threshold
from .pipeline import load_config, run_eval, run_pipeline
from .raster import (
    DEM,
    GREEN,
    HAND,
    MASK_NODATA,
    NIR,
    SLOPE,
    Raster,
    read_grid_file,
    read_mask_file,
    stack as stack_bands,
    write_grid_file,
    write_mask_file,
)
from .synth import SynthParams, expert_tile_offset, generate_scene
from .terrain import DemGrid, StreamMask, hand_simplified, slope_from_dem


@click.group()
@click.version_option(__version__)
def cli():
    """Flood-extent mapping pipeline."""


@cli.command("synth-gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=512, show_default=True)
@click.option("--water-level", type=float, default=3.0, show_default=True)
@click.option("--noise", type=float, default=0.02, show_default=True)
@click.option("--streams", "stream_count", type=int, default=2, show_default=True)
@click.option("--tile-size", type=int, default=None, help="Expert tile size (default size/2).")
@click.option("--hwm-count", type=int, default=3, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth_gen(seed, size, water_level, noise, stream_count, tile_size, hwm_count, out_dir):
    """Generate a synthetic scene with ground truth and HWM points."""
    from . import report as report_mod

    params = SynthParams(
        seed=seed,
        size=size,
        water_level=water_level,
        noise_sigma=noise,
        stream_count=stream_count,
    )
    scene = generate_scene(params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    spectral = scene.stack.select(("Blue", "Green", "Red", "NIR"))
    write_grid_file(spectral, out / "spectral")
    for semantic, name in ((SLOPE, "slope"), (HAND, "hand"), (DEM, "dem")):
        write_grid_file(
            Raster((scene.stack.band(semantic),), (semantic,), scene.stack.transform),
            out / name,
        )
    write_mask_file(scene.truth, out / "truth")
    write_mask_file(scene.streams, out / "streams")

    tile = tile_size if tile_size is not None else size // 2
    x0, y0 = expert_tile_offset(scene, tile)
    expert = scene.truth.crop(x0, y0, tile, tile)
    write_mask_file(expert, out / "expert_mask")

    hwm_rows = _synth_hwm_points(scene, tile, (x0, y0), hwm_count)
    with open(out / "hwm.csv", "w", encoding="utf-8") as fh:
        fh.write("id,x,y\n")
        for ident, x, y in hwm_rows:
            fh.write(f"{ident},{x},{y}\n")

    flood_fraction = float(np.mean(scene.truth.values == 1))
    with open(out / "scene.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "seed": seed,
                "size": size,
                "water_level": water_level,
                "noise_sigma": noise,
                "stream_count": stream_count,
                "tile_size": tile,
                "expert_tile_offset": [x0, y0],
                "flood_fraction": flood_fraction,
                "hwm_count": len(hwm_rows),
            },
            fh,
            sort_keys=True,
            indent=2,
        )
    report_mod.quicklook_figure(scene.stack, out / "quicklook.png", truth=scene.truth)
    click.echo(f"scene written to {out} (flood fraction {flood_fraction:.3f})")


def _synth_hwm_points(scene, tile, expert_offset, hwm_count):
    """First point pins the expert tile; the rest sit on flooded pixels."""
    ox, oy, dx, dy = scene.stack.transform
    half = tile // 2
    x0, y0 = expert_offset

    def to_map(px, py):
        return ox + (px + 0.5) * dx, oy + (py + 0.5) * dy

    rows = [("hwm_expert", *to_map(x0 + half, y0 + half))]
    h, w = scene.truth.values.shape
    ys, xs = np.nonzero(scene.truth.values == 1)
    fits = (
        (xs >= half)
        & (xs <= w - tile + half)
        & (ys >= half)
        & (ys <= h - tile + half)
    )
    ys, xs = ys[fits], xs[fits]
    rng = np.random.default_rng(scene.params.seed)
    order = rng.permutation(ys.size)[: max(hwm_count - 1, 0)]
    for i, j in enumerate(order):
        rows.append((f"hwm_{i:03d}", *to_map(int(xs[j]), int(ys[j]))))
    return rows


@cli.command("ndwi")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def ndwi_cmd(in_path, out_path):
    """Compute NDWI from a raster holding Green and NIR bands."""
    raster = read_grid_file(in_path)
    grid = ndwi(raster.band(GREEN), raster.band(NIR))
    write_grid_file(Raster((grid,), ("NDWI",), raster.transform), out_path)


@cli.command("otsu")
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--band", default=None, help="Band semantic to threshold (default: first band).")
@click.option(
    "--direction",
    type=click.Choice(["above", "below"]),
    default="above",
    show_default=True,
)
@click.option("--out", "out_path", required=True, type=click.Path())
def otsu_cmd(in_path, band, direction, out_path):
    """Otsu-threshold a grid into a flood mask."""
    raster = read_grid_file(in_path)
    grid = raster.band(band) if band else raster.grids[0]
    result = otsu_threshold(grid)
    mask = apply_threshold(
        grid,
        result.threshold,
        ThresholdDirection.ABOVE_IS_FLOOD
        if direction == "above"
        else ThresholdDirection.BELOW_IS_FLOOD,
    )
    write_mask_file(mask, out_path)
    doc = {
        "threshold": result.threshold,
        "between_class_variance": result.between_class_variance,
        "bin_edges": list(result.bin_edges),
        "direction": direction,
    }
    stem = Path(out_path).with_suffix("")
    with open(stem.parent / (stem.name + "_otsu.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
    click.echo(f"threshold {result.threshold:.6g}")


@cli.command("slope")
@click.option("--dem", "dem_path", required=True, type=click.Path())
@click.option("--cell-size", type=float, default=3.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def slope_cmd(dem_path, cell_size, out_path):
    """Derive slope (degrees) from a DEM raster."""
    raster = read_grid_file(dem_path)
    grid = slope_from_dem(DemGrid(raster.grids[0], cell_size))
    write_grid_file(Raster((grid,), (SLOPE,), raster.transform), out_path)


@cli.command("hand")
@click.option("--dem", "dem_path", required=True, type=click.Path())
@click.option("--streams", "streams_path", required=True, type=click.Path())
@click.option("--cell-size", type=float, default=3.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def hand_cmd(dem_path, streams_path, cell_size, out_path):
    """Compute simplified HAND from a DEM and a stream mask."""
    raster = read_grid_file(dem_path)
    streams = StreamMask(read_mask_file(streams_path))
    grid = hand_simplified(DemGrid(raster.grids[0], cell_size), streams)
    write_grid_file(Raster((grid,), (HAND,), raster.transform), out_path)


@cli.command("stack")
@click.option("--in", "in_paths", multiple=True, required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def stack_cmd(in_paths, out_path):
    """Concatenate the bands of the given rasters, in order."""
    pairs = []
    transform = None
    for p in in_paths:
        raster = read_grid_file(p)
        transform = transform or raster.transform
        pairs.extend(zip(raster.grids, raster.semantics))
    stacked = stack_bands(pairs)
    if transform is not None:
        stacked = Raster(stacked.grids, stacked.semantics, transform)
    write_grid_file(stacked, out_path)


@cli.command("rf-train")
@click.option("--stack", "stack_path", required=True, type=click.Path())
@click.option("--labels", "labels_path", required=True, type=click.Path())
@click.option("--sample-fraction", type=float, default=0.5, show_default=True)
@click.option("--trees", type=int, default=100, show_default=True)
@click.option("--mtry", type=int, default=None)
@click.option("--max-depth", type=int, default=None)
@click.option("--bootstrap/--no-bootstrap", default=True, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def rf_train(
    stack_path, labels_path, sample_fraction, trees, mtry, max_depth, bootstrap, seed, threads, out_dir
):
    """Train a forest on a stratified sample of an annotated stack."""
    from . import report as report_mod

    raster = read_grid_file(stack_path)
    labels = read_mask_file(labels_path)
    if labels.width != raster.width or labels.height != raster.height:
        raise SemanticsError("labels and stack dimensions must match")
    cube = raster.to_array().reshape(raster.band_count, -1).T
    flat = labels.values.ravel()
    sampled = stratified_pixel_sample(labels, sample_fraction, seed)
    ok = ~np.isnan(cube).any(axis=1)
    train_idx = sampled[ok[sampled]]
    matrix = SampleMatrix(cube[train_idx], flat[train_idx], feature_names=raster.semantics)
    params = ForestParams(
        n_trees=trees, mtry=mtry, max_depth=max_depth, bootstrap=bootstrap, seed=seed
    )
    forest = fit_forest(matrix, params, threads=threads)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_forest(forest, out / "forest.json")
    report_mod.write_importances(
        list(zip(forest.feature_names, forest.importances)), out
    )

    pred = predict_raster(forest, raster, threads=threads)
    pred_flat = pred.values.ravel()
    in_sample = np.zeros(flat.size, dtype=bool)
    in_sample[sampled] = True
    valid = (flat != MASK_NODATA) & (pred_flat != MASK_NODATA)
    held = valid & ~in_sample
    doc = {
        "n_train_pixels": int(train_idx.size),
        "train_accuracy": float(np.mean(pred_flat[valid & in_sample] == flat[valid & in_sample]))
        if (valid & in_sample).any()
        else 1.0,
        "heldout_accuracy": float(np.mean(pred_flat[held] == flat[held])) if held.any() else 1.0,
    }
    with open(out / "train_report.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
    click.echo(
        f"held-out accuracy {doc['heldout_accuracy']:.4f} "
        f"({doc['n_train_pixels']} training pixels)"
    )


@cli.command("rf-predict")
@click.option("--forest", "forest_path", required=True, type=click.Path())
@click.option("--stack", "stack_path", required=True, type=click.Path())
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def rf_predict(forest_path, stack_path, threads, out_path):
    """Predict a flood mask for a feature stack."""
    forest = load_forest(forest_path)
    raster = read_grid_file(stack_path)
    mask = predict_raster(forest, raster, threads=threads)
    write_mask_file(mask, out_path)


@cli.command("sample-tiles")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--hwm", "hwm_path", required=True, type=click.Path())
@click.option("--tile-size", type=int, default=1024, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def sample_tiles_cmd(scene_path, hwm_path, tile_size, out_dir):
    """Extract HWM-centered tiles from a scene raster."""
    scene = read_grid_file(scene_path)
    points = read_hwm_csv(hwm_path)
    tiles = sample_tiles(scene, points, tile_size)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    listing = []
    for i, (point, tile) in enumerate(tiles):
        stem = f"tile_{i:03d}_{point.id}"
        write_grid_file(tile, out / stem)
        listing.append({"stem": stem, "hwm_id": point.id, "x": point.x, "y": point.y})
    with open(out / "tiles.json", "w", encoding="utf-8") as fh:
        json.dump(listing, fh, sort_keys=True, indent=2)
    click.echo(f"{len(tiles)} of {len(points)} HWM tiles fit the scene")


@cli.command("export-dataset")
@click.option("--tiles", "tiles_dir", required=True, type=click.Path())
@click.option("--labels", "labels_dir", required=True, type=click.Path())
@click.option(
    "--band-set",
    type=click.Choice(sorted(BAND_SETS)),
    default="Full6",
    show_default=True,
)
@click.option("--crop-size", type=int, default=128, show_default=True)
@click.option("--stride", type=int, default=128, show_default=True)
@click.option("--test-fraction", type=float, default=0.25, show_default=True)
@click.option("--spatial-split", is_flag=True, default=False)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def export_dataset_cmd(
    tiles_dir, labels_dir, band_set, crop_size, stride, test_fraction, spatial_split, seed, out_dir
):
    """Cut stem-matched tile/label pairs into an exported crop dataset."""
    tiles_dir, labels_dir = Path(tiles_dir), Path(labels_dir)
    stems = sorted(
        p.stem for p in tiles_dir.glob("*.json") if (labels_dir / (p.stem + ".json")).exists()
    )
    if not stems:
        raise FloodmapError(f"no stem-matched tiles between {tiles_dir} and {labels_dir}")
    crops = []
    for stem in stems:
        tile = read_grid_file(tiles_dir / stem).select(BAND_SETS[band_set])
        label = read_mask_file(labels_dir / stem)
        crops.extend(make_crops(tile, label, stem, crop_size, stride))
    manifest = split_train_test(crops, test_fraction, seed, spatial=spatial_split)
    export_dataset(crops, manifest, out_dir)
    n_train, n_test = manifest.counts
    click.echo(f"exported {n_train} train / {n_test} test crops to {out_dir}")


@cli.command("eval")
@click.option("--pred", "pred_dir", required=True, type=click.Path())
@click.option("--truth", "truth_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
def eval_cmd(pred_dir, truth_dir, out_dir):
    """Pool confusion over stem-matched mask pairs and write the report."""
    from . import report as report_mod

    report, consistency = run_eval(pred_dir, truth_dir)
    report_mod.write_metrics(report, out_dir, consistency_f1=consistency)
    click.echo(
        f"f1 {report.f1:.4f} iou {report.iou:.4f} accuracy {report.accuracy:.4f}"
    )


@cli.group()
def pipeline():
    """Multi-stage pipeline runs."""


@pipeline.command("run")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override every configured seed.")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", default=None, help="Override output_dir.")
def pipeline_run(config_path, seed, threads, out_dir):
    """Run stages 1-3 (and eval when truth is configured) from a config file."""
    config = load_config(config_path, overrides={"output_dir": out_dir})
    if seed is not None:
        from dataclasses import replace

        config = replace(
            config,
            forest=replace(config.forest, seed=seed),
            dataset=replace(config.dataset, seed=seed),
        )
    doc = run_pipeline(config, threads=threads)
    click.echo(
        f"pipeline complete: {doc['stage2']['n_tiles']} tiles, "
        f"held-out accuracy {doc['stage2']['heldout_accuracy']:.4f}"
    )


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except FloodmapError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
