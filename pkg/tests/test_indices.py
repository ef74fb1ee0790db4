import numpy as np
import pytest

from floodmap.errors import DegenerateInputError, ShapeError
from floodmap.indices import (
    NdwiParams,
    ThresholdDirection,
    apply_threshold,
    ndwi,
    otsu_threshold,
)
from floodmap.raster import MASK_NODATA, Grid
from oracles import otsu_oracle


def g(values):
    return Grid(np.asarray(values, dtype=np.float32))


class TestNdwi:
    def test_equal_bands_give_zero(self):
        out = ndwi(g(np.full((3, 3), 0.3)), g(np.full((3, 3), 0.3)))
        np.testing.assert_allclose(out.values, 0.0, atol=1e-7)

    def test_direct_arithmetic(self):
        out = ndwi(g([[0.6]]), g([[0.2]]))
        assert out.values[0, 0] == pytest.approx(0.4 / (0.8 + 1e-8), abs=1e-7)

    def test_epsilon_guards_zero_denominator(self):
        out = ndwi(g([[0.0]]), g([[0.0]]))
        assert out.values[0, 0] == 0.0

    def test_nan_propagates(self):
        out = ndwi(g([[np.nan, 0.5]]), g([[0.2, 0.2]]))
        assert np.isnan(out.values[0, 0])
        assert np.isfinite(out.values[0, 1])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ndwi(g(np.zeros((2, 2))), g(np.zeros((2, 3))))

    def test_antisymmetry(self):
        rng = np.random.default_rng(21)
        a = rng.uniform(0.01, 1.0, (8, 8)).astype(np.float32)
        b = rng.uniform(0.01, 1.0, (8, 8)).astype(np.float32)
        fwd = ndwi(g(a), g(b)).values
        rev = ndwi(g(b), g(a)).values
        np.testing.assert_allclose(fwd, -rev, atol=1e-6)

    def test_range_for_nonnegative_inputs(self):
        rng = np.random.default_rng(22)
        a = rng.uniform(0, 1, (16, 16)).astype(np.float32)
        b = rng.uniform(0, 1, (16, 16)).astype(np.float32)
        out = ndwi(g(a), g(b)).values
        assert (out > -1).all() and (out <= 1).all()

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ShapeError):
            NdwiParams(epsilon=0.0)


class TestOtsu:
    def test_symmetric_bimodal(self):
        v = np.array([[0.1] * 8 + [0.9] * 8], dtype=np.float32)
        res = otsu_threshold(Grid(v))
        assert 0.1 < res.threshold < 0.9
        below = (v < res.threshold).sum()
        assert below == 8

    def test_separates_well_separated_clusters(self):
        v = np.array([[1, 2, 3, 101, 102, 103]], dtype=np.float32)
        res = otsu_threshold(Grid(v))
        assert otsu_oracle(v) == res.threshold
        assert 3 < res.threshold <= 101

    def test_constant_grid_raises(self):
        with pytest.raises(DegenerateInputError):
            otsu_threshold(g(np.full((4, 4), 2.5)))

    def test_single_finite_value_raises(self):
        v = np.full((3, 3), np.nan, dtype=np.float32)
        v[0, 0] = 1.0
        with pytest.raises(DegenerateInputError):
            otsu_threshold(Grid(v))

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            h, w = rng.integers(4, 24, 2)
            if rng.random() < 0.5:
                v = rng.normal(0, 1, (h, w))
            else:
                # bimodal with duplicates to exercise tie handling
                v = np.where(
                    rng.random((h, w)) < 0.4,
                    rng.choice([0.1, 0.12, 0.15], (h, w)),
                    rng.choice([0.7, 0.8], (h, w)),
                )
            v = v.astype(np.float32)
            if rng.random() < 0.3:
                v[rng.random((h, w)) < 0.1] = np.nan
            if np.unique(v[np.isfinite(v)]).size < 2:
                continue
            res = otsu_threshold(Grid(v))
            assert res.threshold == otsu_oracle(v)

    def test_threshold_within_range_and_variance_nonnegative(self):
        rng = np.random.default_rng(24)
        v = rng.uniform(5, 9, (10, 10)).astype(np.float32)
        res = otsu_threshold(Grid(v))
        assert 5 <= res.threshold <= 9
        assert res.between_class_variance >= 0
        assert res.histogram.sum() == 100

    def test_affine_invariance(self):
        rng = np.random.default_rng(25)
        v = rng.normal(0, 1, (12, 12)).astype(np.float32)
        res = otsu_threshold(Grid(v))
        a, b = 3.5, -2.0
        scaled = otsu_threshold(Grid((a * v + b).astype(np.float32)))
        bin_width = a * (res.bin_edges[1] - res.bin_edges[0]) / 256
        assert scaled.threshold == pytest.approx(a * res.threshold + b, abs=bin_width + 1e-6)


class TestApplyThreshold:
    def test_infinite_threshold_gives_all_zero(self):
        v = np.array([[1.0, np.nan], [5.0, -3.0]], dtype=np.float32)
        out = apply_threshold(Grid(v), np.inf, ThresholdDirection.ABOVE_IS_FLOOD)
        assert out.values[0, 0] == 0
        assert out.values[0, 1] == MASK_NODATA
        assert (out.values[1] == 0).all()

    def test_above_is_flood(self):
        out = apply_threshold(g([[-0.2, 0.3]]), 0.0, ThresholdDirection.ABOVE_IS_FLOOD)
        np.testing.assert_array_equal(out.values, [[0, 1]])

    def test_below_is_flood(self):
        out = apply_threshold(g([[-0.2, 0.3]]), 0.0, ThresholdDirection.BELOW_IS_FLOOD)
        np.testing.assert_array_equal(out.values, [[1, 0]])

    def test_tie_classified_zero_in_both_directions(self):
        for direction in ThresholdDirection:
            out = apply_threshold(g([[0.5]]), 0.5, direction)
            assert out.values[0, 0] == 0

    def test_directions_partition_non_tie_pixels(self):
        rng = np.random.default_rng(26)
        v = rng.normal(0, 1, (9, 9)).astype(np.float32)
        v[rng.random((9, 9)) < 0.1] = np.nan
        thr = 0.2
        above = apply_threshold(Grid(v), thr, ThresholdDirection.ABOVE_IS_FLOOD).values
        below = apply_threshold(Grid(v), thr, ThresholdDirection.BELOW_IS_FLOOD).values
        consider = np.isfinite(v) & (v != thr)
        assert ((above[consider] == 1) ^ (below[consider] == 1)).all()
        assert (above[np.isnan(v)] == MASK_NODATA).all()
