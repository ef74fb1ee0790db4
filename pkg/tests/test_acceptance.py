"""Acceptance suite: one test per release criterion, each with a hard
tolerance and a printed PASS line.  Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    bilinear_oracle,
    cart_grow,
    cart_predict,
    confusion_oracle,
    otsu_oracle,
    random_cart_dataset,
    scores_oracle,
)

from floodmap.dataset import stratified_pixel_sample
from floodmap.forest import (
    ForestParams,
    SampleMatrix,
    fit_forest,
    predict_forest,
)
from floodmap.indices import ndwi, otsu_threshold
from floodmap.metrics import ConfusionMatrix, confusion, f1_from_iou, scores
from floodmap.pipeline import (
    DatasetConfig,
    PipelineConfig,
    run_pipeline,
    run_stage2_rf,
)
from floodmap.raster import (
    FEATURE_BANDS,
    Grid,
    Mask,
    feature_stack,
    resample_bilinear,
)
from floodmap.synth import SynthParams, expert_tile_offset, generate_scene


def report(name, detail):
    print(f"PASS {name}: {detail}")


class TestAcceptance:
    def test_table1_f1_iou_consistency(self):
        rows = [(0.708, 0.829), (0.8507, 0.9193), (0.8520, 0.9201)]
        for iou, f1 in rows:
            assert f1_from_iou(iou) == pytest.approx(f1, abs=0.0005)
        report(
            "table1-consistency",
            ", ".join(f"{i}->{f1_from_iou(i):.4f}" for i, _ in rows),
        )

    def test_otsu_exhaustive_oracle_equivalence(self):
        rng = np.random.default_rng(101)
        started = time.perf_counter()
        checked = 0
        for _ in range(1000):
            h, w = rng.integers(8, 65, 2)
            kind = rng.random()
            if kind < 0.4:
                v = rng.normal(0, 1, (h, w))
            elif kind < 0.8:
                split = rng.random()
                v = np.where(
                    rng.random((h, w)) < split,
                    rng.normal(-2, 0.3, (h, w)),
                    rng.normal(2, 0.5, (h, w)),
                )
            else:
                v = rng.choice([0.0, 0.25, 0.5, 1.0], size=(h, w))
            v = v.astype(np.float32)
            finite = v[np.isfinite(v)]
            if np.unique(finite).size < 2:
                continue
            got = otsu_threshold(Grid(v)).threshold
            expected = otsu_oracle(v)
            assert got == expected
            checked += 1
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0
        report("otsu-oracle", f"{checked} grids exact in {elapsed:.1f}s")

    def test_bilinear_exactness(self):
        rng = np.random.default_rng(102)
        started = time.perf_counter()
        worst = 0.0
        for _ in range(200):
            h, w = rng.integers(2, 40, 2)
            th, tw = rng.integers(1, 50, 2)
            a = rng.uniform(-1, 1)
            b = rng.uniform(-1, 1) / max(w - 1, 1)
            c = rng.uniform(-1, 1) / max(h - 1, 1)
            d = rng.uniform(-1, 1) / (max(w - 1, 1) * max(h - 1, 1))
            ys, xs = np.mgrid[0:h, 0:w]
            src = (a + b * xs + c * ys + d * xs * ys).astype(np.float32)
            out = resample_bilinear(Grid(src), int(tw), int(th))
            expected = bilinear_oracle(src.astype(np.float64), int(tw), int(th))
            worst = max(worst, float(np.abs(out.values - expected).max()))
            assert worst <= 1e-6
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0
        report("bilinear-exactness", f"max error {worst:.2e} in {elapsed:.1f}s")

    def test_rf_cart_oracle_equivalence(self):
        rng = np.random.default_rng(103)
        started = time.perf_counter()
        for case in range(100):
            n = int(rng.integers(20, 201))
            f = int(rng.integers(1, 5))
            structured = case % 10 != 0  # every tenth set is pure noise
            x, y = random_cart_dataset(rng, n=n, f=f, structured=structured)
            params = ForestParams(n_trees=1, mtry=f, bootstrap=False, seed=11)
            forest = fit_forest(SampleMatrix(x, y), params)
            tree = cart_grow(x, y)
            probe = np.vstack(
                [x, rng.normal(0, 1.3, (40, f)).astype(np.float32)]
            ).astype(np.float32)
            got, _ = predict_forest(forest, SampleMatrix(probe))
            expected = np.array([cart_predict(tree, row) for row in probe])
            np.testing.assert_array_equal(got, expected)
        elapsed = time.perf_counter() - started
        assert elapsed < 30.0
        report("rf-cart-oracle", f"100 datasets exact in {elapsed:.1f}s")

    def test_paper_analog_rf_accuracy(self, tmp_path):
        started = time.perf_counter()
        scene = generate_scene(
            SynthParams(seed=2021, size=2048, water_level=3.0, noise_sigma=0.05, stream_count=3)
        )
        nd = ndwi(scene.stack.band("Green"), scene.stack.band("NIR"))
        stack = feature_stack(
            scene.stack.band("Blue"),
            scene.stack.band("Green"),
            scene.stack.band("Red"),
            scene.stack.band("NIR"),
            scene.stack.band("Slope"),
            scene.stack.band("HAND"),
            nd,
            transform=scene.stack.transform,
        )
        tile_size = 1024
        x0, y0 = expert_tile_offset(scene, tile_size)
        expert = scene.truth.crop(x0, y0, tile_size, tile_size)
        ox, oy, dx, dy = scene.stack.transform
        cx = ox + (x0 + tile_size // 2 + 0.5) * dx
        cy = oy + (y0 + tile_size // 2 + 0.5) * dy
        hwm = tmp_path / "hwm.csv"
        hwm.write_text(f"id,x,y\nexpert,{cx},{cy}\n")
        config = PipelineConfig(
            spectral="unused",
            slope="unused",
            hand="unused",
            hwm_csv=str(hwm),
            expert_mask="unused",
            output_dir=str(tmp_path / "out"),
            tile_size=tile_size,
            sample_fraction=0.5,
            forest=ForestParams(n_trees=100, seed=1234),
        )
        result = run_stage2_rf(config, stack, expert)
        elapsed = time.perf_counter() - started
        assert result.heldout_accuracy >= 0.95
        assert elapsed < 120.0
        report(
            "paper-analog-rf",
            f"held-out accuracy {result.heldout_accuracy:.4f} "
            f"({result.n_train_pixels} train px) in {elapsed:.0f}s",
        )

    def test_feature_importance_sanity(self):
        rng = np.random.default_rng(104)
        n = 3000
        x = rng.uniform(0, 1, (n, 7)).astype(np.float32)
        x[:, 6] = rng.uniform(-0.5, 1.0, n)  # NDWI-like range
        y = (x[:, 6] > 0.1).astype(np.uint8)
        forest = fit_forest(
            SampleMatrix(x, y, feature_names=FEATURE_BANDS),
            ForestParams(n_trees=50, seed=7),
        )
        weights = dict(zip(forest.feature_names, forest.importances))
        top = max(weights, key=weights.get)
        assert top == "NDWI"
        assert weights["NDWI"] >= 0.5
        assert forest.importances.sum() == pytest.approx(1.0, abs=1e-9)
        report("feature-importance", f"NDWI weight {weights['NDWI']:.3f}")

    def test_metrics_bruteforce_equivalence(self):
        rng = np.random.default_rng(105)
        pooled = ConfusionMatrix()
        oracle_counts = np.zeros(4, dtype=np.int64)
        for _ in range(500):
            h, w = rng.integers(4, 20, 2)
            pred = rng.choice([0, 1, 255], size=(h, w), p=[0.45, 0.45, 0.1]).astype(np.uint8)
            truth = rng.choice([0, 1, 255], size=(h, w), p=[0.5, 0.4, 0.1]).astype(np.uint8)
            cm = confusion(Mask(pred), Mask(truth))
            expected = confusion_oracle(pred, truth)
            assert (cm.tp, cm.fp, cm.fn, cm.tn) == expected
            pooled = pooled + cm
            oracle_counts += np.array(expected)
        got = scores(pooled)
        expected_scores = scores_oracle(*oracle_counts.tolist())
        assert (pooled.tp, pooled.fp, pooled.fn, pooled.tn) == tuple(oracle_counts)
        for key, value in expected_scores.items():
            assert getattr(got, key) == value
        report("metrics-bruteforce", f"pooled over 500 pairs, counts {tuple(oracle_counts)}")

    def test_pipeline_determinism_across_threads(self, tmp_path):
        scene_dir = tmp_path / "scene"
        from floodmap.cli import main

        assert main(
            [
                "synth-gen",
                "--seed", "77",
                "--size", "128",
                "--water-level", "3.0",
                "--noise", "0.02",
                "--tile-size", "64",
                "--out", str(scene_dir),
            ]
        ) == 0

        def run(out_dir, threads):
            config = PipelineConfig(
                spectral=str(scene_dir / "spectral"),
                slope=str(scene_dir / "slope"),
                hand=str(scene_dir / "hand"),
                hwm_csv=str(scene_dir / "hwm.csv"),
                expert_mask=str(scene_dir / "expert_mask"),
                truth_mask=str(scene_dir / "truth"),
                tile_size=64,
                output_dir=str(out_dir),
                forest=ForestParams(n_trees=24, seed=5),
                dataset=DatasetConfig(crop_size=32, stride=32, test_fraction=0.25, seed=2),
            )
            run_pipeline(config, threads=threads)

        run(tmp_path / "t1", threads=1)
        run(tmp_path / "t4", threads=4)

        compared = []
        for rel in ["forest.json", "metrics.json", "dataset/manifest.json",
                    "scene_pred.json", "scene_pred.bin"]:
            a = (tmp_path / "t1" / rel).read_bytes()
            b = (tmp_path / "t4" / rel).read_bytes()
            assert a == b, rel
            compared.append(rel)
        for mask_file in sorted((tmp_path / "t1" / "rf_masks").iterdir()):
            twin = tmp_path / "t4" / "rf_masks" / mask_file.name
            assert mask_file.read_bytes() == twin.read_bytes(), mask_file.name
            compared.append(f"rf_masks/{mask_file.name}")
        for crop_file in sorted((tmp_path / "t1" / "dataset").iterdir()):
            twin = tmp_path / "t4" / "dataset" / crop_file.name
            assert crop_file.read_bytes() == twin.read_bytes(), crop_file.name
        report("determinism", f"{len(compared)}+ artifacts byte-identical at 1 vs 4 threads")

    def test_stratified_sampling_exactness(self):
        rng = np.random.default_rng(106)
        started = time.perf_counter()
        for _ in range(1000):
            h, w = rng.integers(3, 24, 2)
            v = rng.choice([0, 1, 255], size=(h, w), p=[0.45, 0.45, 0.1]).astype(np.uint8)
            flat = v.ravel()
            n0, n1 = int((flat == 0).sum()), int((flat == 1).sum())
            if n0 == 0 or n1 == 0:
                continue
            fraction = float(rng.uniform(0.02, 1.0))
            idx = stratified_pixel_sample(Mask(v), fraction, int(rng.integers(0, 2**31)))
            picked = flat[idx]
            want0 = int(np.floor(fraction * n0 + 0.5))
            want1 = int(np.floor(fraction * n1 + 0.5))
            assert (picked == 0).sum() == want0
            assert (picked == 1).sum() == want1
            assert (picked != 255).all()
            # prevalence deviation bound: at most one pixel per class
            if want0 + want1 > 0:
                got_prev = (picked == 1).sum() / (want0 + want1)
                ideal0, ideal1 = fraction * n0, fraction * n1
                assert abs(want0 - ideal0) <= 0.5 + 1e-9
                assert abs(want1 - ideal1) <= 0.5 + 1e-9
        elapsed = time.perf_counter() - started
        report("stratified-sampling", f"1000 masks exact in {elapsed:.1f}s")
