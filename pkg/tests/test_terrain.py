import numpy as np
import pytest

from floodmap.errors import DegenerateInputError, ShapeError
from floodmap.raster import Grid, Mask
from floodmap.terrain import (
    DemGrid,
    StreamMask,
    _nearest_stream_elevation_bruteforce,
    _nearest_stream_elevation_grouped,
    hand_simplified,
    slope_from_dem,
)


def dem(values, cell=1.0):
    return DemGrid(Grid(np.asarray(values, dtype=np.float32)), cell_size=cell)


def streams_from_cells(shape, cells):
    m = np.zeros(shape, dtype=np.uint8)
    for y, x in cells:
        m[y, x] = 1
    return StreamMask(Mask(m))


class TestSlope:
    def test_flat_dem_is_zero(self):
        out = slope_from_dem(dem(np.full((5, 5), 100.0)))
        np.testing.assert_allclose(out.values, 0.0, atol=1e-6)

    def test_unit_plane_is_45_degrees(self):
        xs = np.tile(np.arange(8, dtype=np.float64), (8, 1))
        out = slope_from_dem(dem(xs, cell=1.0))
        np.testing.assert_allclose(out.values[1:-1, 1:-1], 45.0, atol=1e-4)

    def test_matches_central_difference_oracle_interior(self):
        # random smooth surface: sum of low-frequency sinusoids
        rng = np.random.default_rng(11)
        ys, xs = np.mgrid[0:16, 0:16].astype(np.float64)
        z = np.zeros((16, 16))
        for _ in range(4):
            amp = rng.uniform(1, 4)
            wx, wy = rng.uniform(0.05, 0.3, 2)
            px, py = rng.uniform(0, 2 * np.pi, 2)
            z += amp * np.sin(wx * xs + px) * np.sin(wy * ys + py)
        out = slope_from_dem(dem(z, cell=2.0)).values
        # independent oracle: plain central differences, gradient magnitude
        for y in range(1, 15):
            for x in range(1, 15):
                dzdx = (z[y, x + 1] - z[y, x - 1]) / (2 * 2.0)
                dzdy = (z[y + 1, x] - z[y - 1, x]) / (2 * 2.0)
                expected = np.degrees(np.arctan(np.hypot(dzdx, dzdy)))
                assert abs(out[y, x] - expected) <= 0.5

    def test_nan_poisons_window(self):
        z = np.full((5, 5), 10.0)
        z[2, 2] = np.nan
        out = slope_from_dem(dem(z)).values
        assert np.isnan(out[1:4, 1:4]).all()
        assert np.isfinite(out[0, 0])

    def test_requires_3x3(self):
        with pytest.raises(ShapeError):
            slope_from_dem(dem(np.zeros((2, 5))))

    def test_translation_invariance(self):
        rng = np.random.default_rng(12)
        z = rng.normal(0, 3, (9, 9))
        a = slope_from_dem(dem(z)).values
        b = slope_from_dem(dem(z + 250.0)).values
        np.testing.assert_allclose(a, b, atol=1e-3)

    def test_symmetric_dem_transpose_invariance(self):
        rng = np.random.default_rng(13)
        z = rng.normal(0, 2, (7, 7))
        z = (z + z.T) / 2
        out = slope_from_dem(dem(z)).values
        np.testing.assert_allclose(out, out.T, atol=1e-5)

    def test_range(self):
        rng = np.random.default_rng(14)
        out = slope_from_dem(dem(rng.normal(0, 500, (12, 12)), cell=0.5)).values
        assert (out >= 0).all() and (out < 90).all()


def hand_oracle(z, cells):
    """Exhaustive all-pairs nearest-stream search with the documented tie-break."""
    h, w = z.shape
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            best = None
            for (sy, sx) in cells:
                key = (
                    (y - sy) ** 2 + (x - sx) ** 2,
                    z[sy, sx],
                    sy * w + sx,
                )
                if best is None or key < best:
                    best = key
            out[y, x] = max(z[y, x] - best[1], 0.0)
    return out


class TestHand:
    def test_stream_cells_are_zero(self):
        z = np.arange(16, dtype=np.float64).reshape(4, 4) + 50
        s = streams_from_cells((4, 4), [(1, 2), (3, 0)])
        out = hand_simplified(dem(z), s).values
        assert out[1, 2] == 0.0
        assert out[3, 0] == 0.0

    def test_direct_subtraction(self):
        z = np.full((3, 3), 12.0)
        z[0, 0] = 10.0
        s = streams_from_cells((3, 3), [(0, 0)])
        out = hand_simplified(dem(z), s).values
        assert out[2, 2] == pytest.approx(2.0)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(15)
        z = rng.normal(30, 5, (12, 12)).astype(np.float32).astype(np.float64)
        cells = [(2, 3), (7, 9), (10, 1)]
        s = streams_from_cells((12, 12), cells)
        out = hand_simplified(dem(z), s).values
        expected = hand_oracle(z, cells)
        np.testing.assert_array_equal(out.astype(np.float64), expected.astype(np.float32).astype(np.float64))

    def test_tie_break_by_elevation(self):
        # pixel equidistant from two stream cells with different elevations
        z = np.zeros((1, 5))
        z[0, 0] = 7.0   # left stream, higher
        z[0, 4] = 3.0   # right stream, lower
        z[0, 2] = 5.0
        s = streams_from_cells((1, 5), [(0, 0), (0, 4)])
        out = hand_simplified(dem(z), s).values
        assert out[0, 2] == pytest.approx(2.0)  # 5 - 3, lower stream wins

    def test_clamps_negative_to_zero(self):
        z = np.zeros((1, 3))
        z[0, 0] = 10.0  # stream above the pixel
        s = streams_from_cells((1, 3), [(0, 0)])
        out = hand_simplified(dem(z), s).values
        assert out[0, 2] == 0.0

    def test_everywhere_nonnegative_and_zero_on_streams(self):
        rng = np.random.default_rng(16)
        z = rng.normal(100, 20, (20, 20))
        sm = (rng.random((20, 20)) < 0.05).astype(np.uint8)
        sm[0, 0] = 1
        out = hand_simplified(dem(z), StreamMask(Mask(sm))).values
        assert (out >= 0).all()
        assert (out[sm == 1] == 0).all()

    def test_translation_invariance(self):
        rng = np.random.default_rng(17)
        z = rng.normal(0, 10, (10, 10))
        s = streams_from_cells((10, 10), [(4, 4), (8, 2)])
        a = hand_simplified(dem(z), s).values
        b = hand_simplified(dem(z + 77.0), s).values
        np.testing.assert_allclose(a, b, atol=1e-4)

    def test_requires_streams(self):
        with pytest.raises(DegenerateInputError):
            hand_simplified(dem(np.zeros((4, 4))), streams_from_cells((4, 4), []))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            hand_simplified(dem(np.zeros((4, 4))), streams_from_cells((4, 5), [(0, 0)]))

    def test_both_paths_agree(self):
        rng = np.random.default_rng(18)
        for _ in range(25):
            h, w = rng.integers(4, 30, 2)
            z = rng.normal(40, 8, (h, w))
            sm = rng.random((h, w)) < 0.1
            if not sm.any():
                sm[rng.integers(h), rng.integers(w)] = True
            a = _nearest_stream_elevation_bruteforce(z, sm)
            b = _nearest_stream_elevation_grouped(z, sm)
            np.testing.assert_array_equal(a, b)

    def test_grouped_path_used_on_large_inputs(self, monkeypatch):
        import floodmap.terrain as terrain_mod

        monkeypatch.setattr(terrain_mod, "_BRUTE_FORCE_BUDGET", 0)
        z = np.arange(36, dtype=np.float64).reshape(6, 6)
        cells = [(0, 0), (5, 5)]
        s = streams_from_cells((6, 6), cells)
        out = hand_simplified(dem(z), s).values
        expected = hand_oracle(z, cells)
        np.testing.assert_allclose(out, expected, atol=1e-5)
