"""Terrain derivatives: Horn slope from a DEM and a simplified HAND surface.

The HAND here is a surrogate used for synthetic scenes: height above the
Euclidean-nearest stream cell, clamped at zero.  Flow-path routing (the
basis of drainage-network HAND products) is deliberately out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, ShapeError
from .raster import Grid, Mask


@dataclass(frozen=True)
class DemGrid:
    """Elevation grid in meters with a square cell size in meters."""

    grid: Grid
    cell_size: float

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ShapeError(f"cell_size must be positive, got {self.cell_size}")


@dataclass(frozen=True)
class StreamMask:
    """Mask whose 1-cells are stream channel cells."""

    mask: Mask

    @property
    def cell_count(self) -> int:
        return int(np.count_nonzero(self.mask.values == 1))


def slope_from_dem(dem: DemGrid) -> Grid:
    """Topographic slope in degrees via Horn's 3x3 kernel.

    Border pixels use edge-replicated neighborhoods.  Any NaN inside the
    3x3 window yields NaN.  Output lies in [0, 90).
    """
    z = dem.grid.values.astype(np.float64)
    if z.shape[0] < 3 or z.shape[1] < 3:
        raise ShapeError(f"DEM must be at least 3x3, got {z.shape[1]}x{z.shape[0]}")
    p = np.pad(z, 1, mode="edge")

    # 3x3 window corners/edges named row by row:
    #   a b c
    #   d e f
    #   g h i
    a = p[:-2, :-2]
    b = p[:-2, 1:-1]
    c = p[:-2, 2:]
    d = p[1:-1, :-2]
    f = p[1:-1, 2:]
    g = p[2:, :-2]
    h = p[2:, 1:-1]
    i = p[2:, 2:]

    denom = 8.0 * dem.cell_size
    dzdx = ((c + 2 * f + i) - (a + 2 * d + g)) / denom
    dzdy = ((g + 2 * h + i) - (a + 2 * b + c)) / denom
    slope = np.degrees(np.arctan(np.hypot(dzdx, dzdy)))
    # NaN at the center also poisons via the kernel sums, but an explicit
    # window check keeps the contract independent of arithmetic details.
    nan_window = ndimage.maximum_filter(np.isnan(z).astype(np.uint8), size=3, mode="nearest")
    slope[nan_window > 0] = np.nan
    return Grid(slope.astype(np.float32))


# Work estimate below which the direct all-pairs scan is used; beyond it the
# distance-transform path wins.  Both paths honor the same tie-break.
_BRUTE_FORCE_BUDGET = 20_000_000


def hand_simplified(dem: DemGrid, streams: StreamMask) -> Grid:
    """Height above the Euclidean-nearest stream cell, clamped at zero.

    Ties on distance are broken by the lowest stream elevation, then by
    row-major position of the stream cell.  Stream cells themselves get 0.
    NaN elevations propagate to NaN outputs; stream cells must have finite
    elevation.
    """
    z = dem.grid.values.astype(np.float64)
    sm = streams.mask.values == 1
    if sm.shape != z.shape:
        raise ShapeError("stream mask dimensions must match the DEM")
    n_stream = int(np.count_nonzero(sm))
    if n_stream == 0:
        raise DegenerateInputError("HAND needs at least one stream cell")
    if np.isnan(z[sm]).any():
        raise DegenerateInputError("stream cells must have finite elevation")

    if z.size * n_stream <= _BRUTE_FORCE_BUDGET:
        nearest_elev = _nearest_stream_elevation_bruteforce(z, sm)
    else:
        nearest_elev = _nearest_stream_elevation_grouped(z, sm)

    hand = np.maximum(z - nearest_elev, 0.0)
    return Grid(hand.astype(np.float32))


def _stream_order(z: np.ndarray, sm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stream cell coordinates sorted by (elevation, row-major position)."""
    sy, sx = np.nonzero(sm)
    rm = sy.astype(np.int64) * z.shape[1] + sx
    order = np.lexsort((rm, z[sy, sx]))
    return sy[order], sx[order]


def _nearest_stream_elevation_bruteforce(z: np.ndarray, sm: np.ndarray) -> np.ndarray:
    h, w = z.shape
    sy, sx = _stream_order(z, sm)
    s_elev = z[sy, sx]
    sy = sy.astype(np.int64)
    sx = sx.astype(np.int64)
    ys, xs = np.mgrid[0:h, 0:w]
    ys = ys.reshape(-1).astype(np.int64)
    xs = xs.reshape(-1).astype(np.int64)
    out = np.empty(h * w, dtype=np.float64)
    step = max(1, 4_000_000 // max(1, len(sy)))
    for lo in range(0, h * w, step):
        hi = min(lo + step, h * w)
        d2 = (ys[lo:hi, None] - sy) ** 2 + (xs[lo:hi, None] - sx) ** 2
        # With cells pre-sorted by (elevation, row-major), the first argmin
        # over squared distance realizes the documented tie-break.
        out[lo:hi] = s_elev[np.argmin(d2, axis=1)]
    return out.reshape(h, w)


def _nearest_stream_elevation_grouped(z: np.ndarray, sm: np.ndarray) -> np.ndarray:
    """Exact nearest-stream elevation via the distance transform.

    The Euclidean distance transform fixes each pixel's squared distance D
    to its nearest stream cell.  All lattice offsets realizing exactly D
    are then enumerated and the minimum stream elevation among them taken:
    under the (elevation, row-major) tie-break the row-major part only
    disambiguates identity, never the resulting elevation, so a segmented
    minimum over equal-distance candidates reproduces the contract.
    """
    h, w = z.shape
    dist = ndimage.distance_transform_edt(~sm)
    d2 = np.rint(dist.astype(np.float64) ** 2).astype(np.int64)

    radius = isqrt(int(d2.max()))
    dy_all, dx_all, s_all = _signed_offset_table(int(d2.max()))

    # Pad so candidate coordinates never leave the array; padding cells are
    # non-stream, so they never win.
    wp = w + 2 * radius
    z_pad = np.pad(z, radius, mode="constant", constant_values=np.inf)
    sm_pad = np.pad(sm, radius, mode="constant", constant_values=False)
    z_flat = z_pad.ravel()
    sm_flat = sm_pad.ravel()
    doff = dy_all * wp + dx_all

    flat_d2 = d2.ravel()
    starts_all = np.searchsorted(s_all, flat_d2, side="left")
    counts_all = np.searchsorted(s_all, flat_d2, side="right") - starts_all
    # Every occurring D has a witness offset, so every pixel has candidates.
    assert counts_all.min() > 0

    # Iterate over candidate rank r; sorting pixels by descending candidate
    # count makes the active set a shrinking prefix.
    order = np.argsort(-counts_all, kind="stable")
    counts_sorted = counts_all[order]
    starts_sorted = starts_all[order]
    py = order // w
    px = order % w
    pix_pad = (py + radius) * wp + (px + radius)

    best = np.full(order.size, np.inf)
    max_count = int(counts_sorted[0])
    neg_counts = -counts_sorted
    for r in range(max_count):
        # pixels with counts > r form a prefix of the count-sorted order
        active = int(np.searchsorted(neg_counts, -r, side="left"))
        if active == 0:
            break
        cand_idx = pix_pad[:active] + doff[starts_sorted[:active] + r]
        hit = sm_flat[cand_idx]
        cand = np.where(hit, z_flat[cand_idx], np.inf)
        np.minimum(best[:active], cand, out=best[:active])

    assert np.isfinite(best).all()
    out = np.empty(order.size, dtype=np.float64)
    out[order] = best
    return out.reshape(h, w)


def _signed_offset_table(max_d2: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All signed lattice offsets with squared length <= max_d2, sorted by it."""
    dys = []
    dxs = []
    for dy in range(-isqrt(max_d2), isqrt(max_d2) + 1):
        m = isqrt(max_d2 - dy * dy)
        dx = np.arange(-m, m + 1, dtype=np.int64)
        dys.append(np.full(dx.size, dy, dtype=np.int64))
        dxs.append(dx)
    dy_all = np.concatenate(dys)
    dx_all = np.concatenate(dxs)
    s_all = dy_all * dy_all + dx_all * dx_all
    order = np.argsort(s_all, kind="stable")
    return dy_all[order], dx_all[order], s_all[order]
