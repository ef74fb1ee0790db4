import numpy as np
import pytest
import torch

from dl_trainer.losses import dice_loss


def t(values, dtype=torch.float64):
    return torch.as_tensor(np.asarray(values), dtype=dtype)


class TestDiceLoss:
    def test_perfect_overlap_is_zero(self):
        target = torch.zeros(10, 20, dtype=torch.uint8)
        target[:5] = 1  # 100 foreground pixels
        pred = target.to(torch.float64)
        loss = dice_loss(pred, target, smooth=1.0)
        assert float(loss) == pytest.approx(0.0, abs=1e-12)

    def test_zero_intersection_arithmetic(self):
        target = torch.zeros(10, 10, dtype=torch.uint8)
        target[:5] = 1  # 50 foreground
        pred = 1.0 - target.to(torch.float64)  # 50 predicted, disjoint
        loss = dice_loss(pred, target, smooth=1.0)
        assert float(loss) == pytest.approx(1.0 - 1.0 / 101.0, abs=1e-12)

    def test_uniform_half_prediction(self):
        target = torch.zeros(10, 10, dtype=torch.uint8)
        target[:5] = 1  # 50 of 100 ones
        pred = torch.full((10, 10), 0.5, dtype=torch.float64)
        loss = dice_loss(pred, target, smooth=1.0)
        assert float(loss) == pytest.approx(1.0 - 51.0 / 101.0, abs=1e-12)

    def test_nodata_excluded_from_all_sums(self):
        target = torch.tensor([[1, 255], [0, 255]], dtype=torch.uint8)
        pred = torch.tensor([[1.0, 0.9], [0.0, 0.9]], dtype=torch.float64)
        # only the first column counts: perfect match
        assert float(dice_loss(pred, target, smooth=1.0)) == pytest.approx(0.0, abs=1e-12)

    def test_range_and_zero_iff_equal(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            target = torch.as_tensor(rng.integers(0, 2, (8, 8)), dtype=torch.uint8)
            pred = torch.as_tensor(rng.uniform(0, 1, (8, 8)))
            loss = float(dice_loss(pred, target, smooth=1.0))
            assert 0.0 <= loss < 1.0
            if loss == 0.0:
                assert torch.equal(pred, target.to(pred.dtype))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dice_loss(torch.zeros(3, 3), torch.zeros(3, 4, dtype=torch.uint8))
