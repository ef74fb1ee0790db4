"""Grid data model, band semantics, FGRID I/O, cropping, stacking, resampling.

The FGRID exchange format is a pair of files sharing a stem:

* ``<name>.json`` -- header with fields ``width``, ``height``, ``bands``
  (list of semantic strings), ``dtype`` (``"f32"`` or ``"u8"``), ``nodata``
  (``"nan"`` for f32, 255 for u8) and ``transform`` (``[x0, y0, dx, dy]``
  or ``null``).
* ``<name>.bin`` -- band-sequential, row-major, little-endian payload.
  f32 payloads are IEEE-754 32-bit reals; u8 payloads are raw bytes
  restricted to {0, 1, 255}.

Float grids use NaN as the nodata sentinel; masks use 255.  All arrays are
frozen after construction so values can be shared across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GridFormatError, SemanticsError, ShapeError

# Band semantics are plain strings.  Any name outside CORE_BANDS behaves as
# a free-form "other" band; duplicates are only forbidden within CORE_BANDS.
BLUE = "Blue"
GREEN = "Green"
RED = "Red"
NIR = "NIR"
SLOPE = "Slope"
HAND = "HAND"
NDWI = "NDWI"
DEM = "DEM"
LABEL = "Label"

CORE_BANDS = frozenset({BLUE, GREEN, RED, NIR, SLOPE, HAND, NDWI, DEM, LABEL})

# Canonical order of the 7-band feature stack fed to the classifier.
FEATURE_BANDS = (BLUE, GREEN, RED, NIR, SLOPE, HAND, NDWI)

MASK_NODATA = 255
_MASK_VALUES = frozenset({0, 1, MASK_NODATA})


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Single-band grid of 32-bit reals, NaN marking nodata."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2 or v.size == 0:
            raise ShapeError(f"grid must be a non-empty 2-D array, got shape {v.shape}")
        if np.isinf(v).any():
            raise GridFormatError("grids permit only finite values and NaN")
        object.__setattr__(self, "values", _freeze(np.ascontiguousarray(v)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Raster:
    """Ordered list of same-sized grids with one semantic tag per band."""

    grids: tuple[Grid, ...]
    semantics: tuple[str, ...]
    transform: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        grids = tuple(self.grids)
        semantics = tuple(str(s) for s in self.semantics)
        if len(grids) == 0:
            raise ShapeError("raster needs at least one band")
        if len(grids) != len(semantics):
            raise SemanticsError(
                f"{len(grids)} grids but {len(semantics)} semantics"
            )
        w, h = grids[0].width, grids[0].height
        for g in grids[1:]:
            if g.width != w or g.height != h:
                raise ShapeError("all bands must share identical dimensions")
        _check_unique_semantics(semantics)
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "semantics", semantics)
        if self.transform is not None:
            object.__setattr__(
                self, "transform", tuple(float(t) for t in self.transform)
            )

    @property
    def width(self) -> int:
        return self.grids[0].width

    @property
    def height(self) -> int:
        return self.grids[0].height

    @property
    def band_count(self) -> int:
        return len(self.grids)

    def band(self, semantic: str) -> Grid:
        """Return the grid tagged with *semantic*."""
        for g, s in zip(self.grids, self.semantics):
            if s == semantic:
                return g
        raise SemanticsError(f"raster has no {semantic!r} band")

    def has_band(self, semantic: str) -> bool:
        return semantic in self.semantics

    def select(self, semantics: Sequence[str]) -> "Raster":
        """Band subset in the given order."""
        return Raster(
            tuple(self.band(s) for s in semantics),
            tuple(semantics),
            self.transform,
        )

    def to_array(self) -> np.ndarray:
        """(bands, height, width) float32 view of the raster."""
        return np.stack([g.values for g in self.grids], axis=0)


@dataclass(frozen=True)
class Mask:
    """Binary flood mask: 0 = non-flood, 1 = flood, 255 = nodata."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.ndim != 2 or v.size == 0:
            raise ShapeError(f"mask must be a non-empty 2-D array, got shape {v.shape}")
        bad = ~np.isin(v, (0, 1, MASK_NODATA))
        if bad.any():
            raise GridFormatError(
                f"mask contains values outside {{0, 1, {MASK_NODATA}}}"
            )
        object.__setattr__(self, "values", _freeze(np.ascontiguousarray(v)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def crop(self, x0: int, y0: int, w: int, h: int) -> "Mask":
        _check_window(self.width, self.height, x0, y0, w, h)
        return Mask(self.values[y0 : y0 + h, x0 : x0 + w])

    def valid(self) -> np.ndarray:
        return self.values != MASK_NODATA


def _check_unique_semantics(semantics: Iterable[str]) -> None:
    seen = set()
    for s in semantics:
        if s in CORE_BANDS:
            if s in seen:
                raise SemanticsError(f"duplicate {s!r} band")
            seen.add(s)


def _check_window(width: int, height: int, x0: int, y0: int, w: int, h: int) -> None:
    if w <= 0 or h <= 0:
        raise ShapeError(f"window size must be positive, got {w}x{h}")
    if x0 < 0 or y0 < 0 or x0 + w > width or y0 + h > height:
        raise ShapeError(
            f"window ({x0},{y0},{w},{h}) exceeds extent {width}x{height}"
        )


# ---------------------------------------------------------------------------
# FGRID I/O
# ---------------------------------------------------------------------------


def _fgrid_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".bin")


def _read_header(header_path: Path) -> dict:
    if not header_path.exists():
        raise GridFormatError(f"missing FGRID header {header_path}")
    try:
        with open(header_path, "r", encoding="utf-8") as fh:
            header = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GridFormatError(f"corrupt FGRID header {header_path}: {exc}") from exc
    for key in ("width", "height", "bands", "dtype"):
        if key not in header:
            raise GridFormatError(f"FGRID header {header_path} lacks {key!r}")
    if (
        not isinstance(header["width"], int)
        or not isinstance(header["height"], int)
        or header["width"] <= 0
        or header["height"] <= 0
    ):
        raise GridFormatError(f"FGRID header {header_path} has invalid dimensions")
    if not isinstance(header["bands"], list) or not header["bands"]:
        raise GridFormatError(f"FGRID header {header_path} has invalid band list")
    return header


def read_grid_file(path) -> Raster:
    """Read an f32 FGRID file pair into a Raster.

    *path* may name the stem, the ``.json`` header, or the ``.bin`` payload.
    """
    header_path, bin_path = _fgrid_paths(path)
    header = _read_header(header_path)
    if header["dtype"] != "f32":
        raise GridFormatError(
            f"unsupported dtype {header['dtype']!r} in {header_path} (expected f32)"
        )
    width, height, bands = header["width"], header["height"], header["bands"]
    payload = bin_path.read_bytes()
    expected = width * height * len(bands) * 4
    if len(payload) != expected:
        raise GridFormatError(
            f"payload {bin_path} holds {len(payload)} bytes, expected {expected}"
        )
    cube = np.frombuffer(payload, dtype="<f4").reshape(len(bands), height, width)
    transform = header.get("transform")
    return Raster(
        tuple(Grid(cube[i]) for i in range(len(bands))),
        tuple(bands),
        tuple(transform) if transform is not None else None,
    )


def write_grid_file(raster: Raster, path) -> None:
    """Write a Raster as an f32 FGRID file pair.

    Byte-deterministic: writing the same Raster twice produces identical
    files, and ``read_grid_file`` restores it bit-exactly.
    """
    header_path, bin_path = _fgrid_paths(path)
    header = {
        "width": raster.width,
        "height": raster.height,
        "bands": list(raster.semantics),
        "dtype": "f32",
        "nodata": "nan",
        "transform": list(raster.transform) if raster.transform else None,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True)
    payload = np.stack([g.values for g in raster.grids], axis=0).astype("<f4")
    bin_path.write_bytes(payload.tobytes())


def read_mask_file(path) -> Mask:
    """Read a u8 FGRID mask file pair."""
    header_path, bin_path = _fgrid_paths(path)
    header = _read_header(header_path)
    if header["dtype"] != "u8":
        raise GridFormatError(
            f"unsupported dtype {header['dtype']!r} in {header_path} (expected u8)"
        )
    width, height = header["width"], header["height"]
    if len(header["bands"]) != 1:
        raise GridFormatError(f"mask {header_path} must have exactly one band")
    payload = bin_path.read_bytes()
    if len(payload) != width * height:
        raise GridFormatError(
            f"payload {bin_path} holds {len(payload)} bytes, expected {width * height}"
        )
    values = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return Mask(values)


def write_mask_file(mask: Mask, path) -> None:
    """Write a Mask as a u8 FGRID file pair."""
    header_path, bin_path = _fgrid_paths(path)
    header = {
        "width": mask.width,
        "height": mask.height,
        "bands": [LABEL],
        "dtype": "u8",
        "nodata": MASK_NODATA,
        "transform": None,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True)
    bin_path.write_bytes(mask.values.tobytes())


# ---------------------------------------------------------------------------
# Geometry operations
# ---------------------------------------------------------------------------


def crop(raster: Raster, x0: int, y0: int, w: int, h: int) -> Raster:
    """Extract the w x h window with origin (x0, y0); no clamping.

    Pixel (i, j) of the result equals source pixel (x0+i, y0+j) in every
    band.  The transform origin shifts by the window offset.
    """
    _check_window(raster.width, raster.height, x0, y0, w, h)
    grids = tuple(Grid(g.values[y0 : y0 + h, x0 : x0 + w]) for g in raster.grids)
    transform = raster.transform
    if transform is not None:
        ox, oy, dx, dy = transform
        transform = (ox + x0 * dx, oy + y0 * dy, dx, dy)
    return Raster(grids, raster.semantics, transform)


def resample_bilinear(grid: Grid, target_w: int, target_h: int) -> Grid:
    """Bilinear resampling under the align-centers convention.

    Output pixel centers map linearly onto source pixel centers: for a
    target axis of size m over a source axis of size n, output index i
    lands at source coordinate ``i * (n - 1) / (m - 1)`` (the axis center
    ``(n - 1) / 2`` when m == 1).  Each output value blends the four
    surrounding source pixels; a NaN among the contributors makes the
    output NaN.  Coordinates are clamped to the border.
    """
    if target_w <= 0 or target_h <= 0:
        raise ShapeError(f"target dimensions must be positive, got {target_w}x{target_h}")
    src = grid.values.astype(np.float64)
    h, w = src.shape

    def axis_coords(target: int, source: int) -> np.ndarray:
        if target == 1:
            return np.full(1, (source - 1) / 2.0)
        return np.arange(target, dtype=np.float64) * ((source - 1) / (target - 1))

    xs = np.clip(axis_coords(target_w, w), 0.0, w - 1.0)
    ys = np.clip(axis_coords(target_h, h), 0.0, h - 1.0)

    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = xs - x0
    fy = ys - y0
    # Collapse the far corner onto the near one at integral coordinates so
    # identity resampling is exact and NaNs do not bleed across pixels.
    x1 = np.where(fx > 0, np.minimum(x0 + 1, w - 1), x0)
    y1 = np.where(fy > 0, np.minimum(y0 + 1, h - 1), y0)

    fx = fx[np.newaxis, :]
    fy = fy[:, np.newaxis]
    v00 = src[np.ix_(y0, x0)]
    v10 = src[np.ix_(y0, x1)]
    v01 = src[np.ix_(y1, x0)]
    v11 = src[np.ix_(y1, x1)]
    out = (
        v00 * (1 - fx) * (1 - fy)
        + v10 * fx * (1 - fy)
        + v01 * (1 - fx) * fy
        + v11 * fx * fy
    )
    return Grid(out.astype(np.float32))


def stack(inputs: Sequence[tuple[Grid, str]]) -> Raster:
    """Stack (grid, semantic) pairs into a Raster in the given order."""
    if not inputs:
        raise ShapeError("stack needs at least one band")
    grids = tuple(g for g, _ in inputs)
    semantics = tuple(s for _, s in inputs)
    return Raster(grids, semantics)


def feature_stack(
    blue: Grid,
    green: Grid,
    red: Grid,
    nir: Grid,
    slope: Grid,
    hand: Grid,
    ndwi: Grid,
    transform=None,
) -> Raster:
    """The canonical 7-band feature stack (Blue, Green, Red, NIR, Slope, HAND, NDWI)."""
    r = stack(list(zip((blue, green, red, nir, slope, hand, ndwi), FEATURE_BANDS)))
    if transform is not None:
        r = Raster(r.grids, r.semantics, transform)
    return r
