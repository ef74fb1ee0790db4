import json
import shutil
from pathlib import Path

import numpy as np
import pytest
import torch

from dl_trainer import UnetConfig, evaluate, load_model, train
from dl_trainer.data import ConfigError
from dl_trainer.fgrid import read_mask, write_mask
from dl_trainer.predict import predict_dataset
from helpers import write_crop_dataset


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("tiny")
    root = write_crop_dataset(base / "ds", n_train=4, n_test=2, size=64, seed=7)
    cfg = UnetConfig(in_channels=4, batch_size=4, epochs=3, seed=2)
    model_path, history = train(root, cfg, base / "run")
    return base, root, cfg, model_path, history


class TestTrainLoop:
    def test_history_length_equals_epochs_run(self, tiny_run):
        _, _, cfg, _, history = tiny_run
        assert len(history["train_loss"]) == cfg.epochs
        assert len(history["val_dice"]) == cfg.epochs
        assert len(history["val_iou"]) == cfg.epochs

    def test_history_json_written(self, tiny_run):
        base, _, _, _, history = tiny_run
        on_disk = json.loads((base / "run" / "history.json").read_text())
        assert on_disk == history

    def test_checkpoint_reloads_with_stats(self, tiny_run):
        _, _, cfg, model_path, _ = tiny_run
        model, loaded_cfg, mean, std, band_set = load_model(model_path)
        assert loaded_cfg == cfg
        assert band_set == "Optical4"
        assert mean.shape == (4,) and std.shape == (4,)
        assert (std > 0).all()
        with torch.no_grad():
            y = model(torch.zeros(1, 4, 64, 64))
        assert y.shape == (1, 1, 64, 64)

    def test_band_mismatch_is_config_error(self, tiny_run):
        _, root, _, _, _ = tiny_run
        with pytest.raises(ConfigError):
            train(root, UnetConfig(in_channels=6, epochs=1, seed=0), "unused")

    def test_early_stop_caps_history(self, tmp_path):
        root = write_crop_dataset(tmp_path / "ds", n_train=4, n_test=1, size=64, seed=8)
        cfg = UnetConfig(
            in_channels=4, batch_size=4, epochs=50, seed=0, early_stop_train_loss=0.9
        )
        _, history = train(root, cfg, tmp_path / "run")
        assert len(history["train_loss"]) < 50

    def test_deterministic_history_for_fixed_seed(self, tmp_path):
        root = write_crop_dataset(tmp_path / "ds", n_train=4, n_test=1, size=64, seed=9)
        cfg = UnetConfig(in_channels=4, batch_size=2, epochs=2, seed=5)
        _, h1 = train(root, cfg, tmp_path / "a")
        _, h2 = train(root, cfg, tmp_path / "b")
        assert h1 == h2


class TestEvaluate:
    def test_self_predictions_score_one(self, tiny_run, tmp_path):
        base, root, cfg, model_path, _ = tiny_run
        pred_dir = tmp_path / "preds"
        stems = predict_dataset(model_path, root, pred_dir)
        # rebuild the dataset with the model's own predictions as labels
        self_ds = tmp_path / "self_ds"
        shutil.copytree(root, self_ds)
        for stem in stems:
            mask = read_mask(pred_dir / stem)
            write_mask(mask, self_ds / f"{stem}_y")
        report = evaluate(model_path, self_ds, tmp_path / "m.json")
        assert report["accuracy"] == 1.0
        assert report["counts"]["fp"] == 0 and report["counts"]["fn"] == 0
        if report["counts"]["tp"] > 0:
            assert report["f1"] == 1.0 and report["iou"] == 1.0

    def test_report_matches_schema(self, tiny_run, tmp_path):
        _, root, _, model_path, _ = tiny_run
        report = evaluate(model_path, root, tmp_path / "metrics.json")
        doc = json.loads((tmp_path / "metrics.json").read_text())
        assert doc == report
        assert set(doc) == {
            "counts", "precision", "recall", "f1", "iou", "accuracy", "undefined_flags",
        }
        assert set(doc["counts"]) == {"tp", "fp", "fn", "tn"}
