"""Procedural synthetic scenes with known ground truth.

Every pipeline stage can be exercised without proprietary imagery: a
value-noise DEM yields streams, HAND, and slope; the truth mask is the
pixels with HAND strictly below the water level; spectral bands are drawn
from two fixed reflectance profiles plus Gaussian noise.

Documented generation constants (kept at module scope so acceptance tests
can reason about separability):

* DEM: 4 value-noise octaves, base period size/4, persistence 0.5,
  lacunarity 2, relief ``DEM_RELIEF_M`` over a ``DEM_BASE_M`` floor.
* Streams: within each of ``stream_count`` vertical strips, the cell with
  the lowest elevation of every row (a meandering valley line per strip).
* Water profile: Blue 0.30, Green 0.35, Red 0.18, NIR 0.05.
* Land profile:  Blue 0.12, Green 0.25, Red 0.28, NIR 0.45.

With zero noise the classes are exactly separable: water NDWI is 0.75 and
land NDWI is about -0.29.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ShapeError
from .forest import mix64
from .raster import BLUE, DEM, GREEN, HAND, NIR, RED, SLOPE, Grid, Mask, Raster, crop
from .terrain import DemGrid, StreamMask, hand_simplified, slope_from_dem

CELL_SIZE_M = 3.0
DEM_RELIEF_M = 60.0
DEM_BASE_M = 10.0
DEM_OCTAVES = 4
DEM_PERSISTENCE = 0.5

WATER_PROFILE = {BLUE: 0.30, GREEN: 0.35, RED: 0.18, NIR: 0.05}
LAND_PROFILE = {BLUE: 0.12, GREEN: 0.25, RED: 0.28, NIR: 0.45}

SCENE_BANDS = (BLUE, GREEN, RED, NIR, SLOPE, HAND, DEM)

# Offsets separating the RNG streams drawn from the scene seed.
_STREAM_DEM = 0x100
_STREAM_BAND = 0x200


@dataclass(frozen=True)
class SynthParams:
    seed: int
    size: int = 512
    water_level: float = 3.0
    noise_sigma: float = 0.02
    stream_count: int = 2

    def __post_init__(self):
        if self.size < 64:
            raise ShapeError(f"scene size must be at least 64, got {self.size}")
        if self.noise_sigma < 0:
            raise ShapeError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.stream_count < 1:
            raise ShapeError(f"stream_count must be at least 1, got {self.stream_count}")


@dataclass(frozen=True)
class SynthScene:
    stack: Raster
    truth: Mask
    streams: Mask
    params: SynthParams


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(seed, stream)))


def _value_noise(size: int, period: int, rng: np.random.Generator) -> np.ndarray:
    """One octave of lattice value noise with smoothstep interpolation."""
    lattice_n = size // period + 2
    lattice = rng.random((lattice_n, lattice_n))
    coord = np.arange(size, dtype=np.float64) / period
    i0 = np.floor(coord).astype(np.intp)
    t = coord - i0
    s = t * t * (3.0 - 2.0 * t)
    i1 = i0 + 1
    v00 = lattice[np.ix_(i0, i0)]
    v10 = lattice[np.ix_(i0, i1)]
    v01 = lattice[np.ix_(i1, i0)]
    v11 = lattice[np.ix_(i1, i1)]
    sx = s[np.newaxis, :]
    sy = s[:, np.newaxis]
    top = v00 * (1 - sx) + v10 * sx
    bot = v01 * (1 - sx) + v11 * sx
    return top * (1 - sy) + bot * sy


def _synth_dem(params: SynthParams) -> np.ndarray:
    total = np.zeros((params.size, params.size), dtype=np.float64)
    norm = 0.0
    amp = 1.0
    period = max(params.size // 4, 4)
    for octave in range(DEM_OCTAVES):
        rng = _rng(params.seed, _STREAM_DEM + octave)
        total += amp * _value_noise(params.size, max(period, 2), rng)
        norm += amp
        amp *= DEM_PERSISTENCE
        period = max(period // 2, 2)
    field = total / norm
    lo, hi = field.min(), field.max()
    field = (field - lo) / (hi - lo) if hi > lo else np.zeros_like(field)
    return DEM_BASE_M + DEM_RELIEF_M * field


def _trace_streams(dem: np.ndarray, stream_count: int) -> np.ndarray:
    """Per-row elevation minima inside each vertical strip."""
    h, w = dem.shape
    sm = np.zeros((h, w), dtype=np.uint8)
    edges = np.linspace(0, w, stream_count + 1).astype(int)
    rows = np.arange(h)
    for s in range(stream_count):
        lo, hi = edges[s], max(edges[s + 1], edges[s] + 1)
        xs = lo + np.argmin(dem[:, lo:hi], axis=1)
        sm[rows, xs] = 1
    return sm


def generate_scene(params: SynthParams) -> SynthScene:
    """Deterministic scene build: DEM, streams, HAND, slope, bands, truth."""
    dem_values = _synth_dem(params)
    stream_values = _trace_streams(dem_values, params.stream_count)

    dem = DemGrid(Grid(dem_values.astype(np.float32)), cell_size=CELL_SIZE_M)
    streams = StreamMask(Mask(stream_values))
    hand = hand_simplified(dem, streams)
    slope = slope_from_dem(dem)

    # Truth derives from the emitted float32 HAND band so the invariant
    # [HAND < water_level] is exact on re-check.
    water = hand.values < np.float32(params.water_level)
    truth = Mask(water.astype(np.uint8))

    bands = {}
    for b_index, band in enumerate((BLUE, GREEN, RED, NIR)):
        base = np.where(water, WATER_PROFILE[band], LAND_PROFILE[band])
        if params.noise_sigma > 0:
            rng = _rng(params.seed, _STREAM_BAND + b_index)
            base = base + params.noise_sigma * rng.standard_normal(base.shape)
            base = np.clip(base, 0.0, 1.0)
        bands[band] = Grid(base.astype(np.float32))

    grids = (
        bands[BLUE],
        bands[GREEN],
        bands[RED],
        bands[NIR],
        slope,
        hand,
        dem.grid,
    )
    stack = Raster(grids, SCENE_BANDS, transform=(0.0, 0.0, CELL_SIZE_M, CELL_SIZE_M))
    return SynthScene(stack=stack, truth=truth, streams=streams.mask, params=params)


def expert_tile_offset(scene: SynthScene, tile_size: int = 1024) -> tuple[int, int]:
    """Window offset maximizing flood fraction while containing both classes.

    Ties resolve to the smallest (y, x) offset in row-major order.
    """
    t = scene.truth.values
    h, w = t.shape
    if tile_size > w or tile_size > h:
        raise ShapeError(f"tile_size {tile_size} exceeds scene {w}x{h}")
    flood = (t == 1).astype(np.int64)
    integral = np.zeros((h + 1, w + 1), dtype=np.int64)
    integral[1:, 1:] = flood.cumsum(axis=0).cumsum(axis=1)
    ts = tile_size
    ny, nx = h - ts + 1, w - ts + 1
    counts = (
        integral[ts:, ts:]
        - integral[:ny, ts:]
        - integral[ts:, :nx]
        + integral[:ny, :nx]
    )
    area = ts * ts
    both = (counts > 0) & (counts < area)
    if not both.any():
        raise DegenerateInputError("no window contains both flooded and dry pixels")
    ranked = np.where(both, counts, -1)
    flat = int(np.argmax(ranked))
    y0, x0 = divmod(flat, ranked.shape[1])
    return x0, y0


def expert_tile(scene: SynthScene, tile_size: int = 1024) -> tuple[Raster, Mask]:
    """The stand-in for the manually annotated sample: the wettest mixed tile."""
    x0, y0 = expert_tile_offset(scene, tile_size)
    features = crop(scene.stack, x0, y0, tile_size, tile_size)
    label = scene.truth.crop(x0, y0, tile_size, tile_size)
    return features, label
