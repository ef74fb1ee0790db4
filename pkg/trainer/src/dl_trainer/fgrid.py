"""Minimal FGRID reader/writer.

The trainer talks to the pipeline only through its documented file
formats, so this module reimplements just enough of FGRID: a JSON header
(`width`, `height`, `bands`, `dtype`, `nodata`, `transform`) next to a
band-sequential little-endian binary payload.  dtype "f32" carries
32-bit reals with NaN nodata; "u8" carries mask bytes in {0, 1, 255}.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MASK_NODATA = 255


class FgridError(ValueError):
    pass


def _paths(path):
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".bin")


def read_raster(path) -> tuple[np.ndarray, list[str]]:
    """Returns (bands, height, width) float32 cube plus band names."""
    header_path, bin_path = _paths(path)
    header = json.loads(header_path.read_text())
    if header.get("dtype") != "f32":
        raise FgridError(f"{header_path}: expected dtype f32")
    w, h, bands = header["width"], header["height"], header["bands"]
    raw = bin_path.read_bytes()
    if len(raw) != w * h * len(bands) * 4:
        raise FgridError(f"{bin_path}: payload size mismatch")
    cube = np.frombuffer(raw, dtype="<f4").reshape(len(bands), h, w)
    return cube.copy(), list(bands)


def write_raster(cube: np.ndarray, bands: list[str], path, transform=None) -> None:
    cube = np.asarray(cube, dtype="<f4")
    if cube.ndim != 3 or cube.shape[0] != len(bands):
        raise FgridError("cube must be (bands, height, width) matching the band list")
    header_path, bin_path = _paths(path)
    header = {
        "width": int(cube.shape[2]),
        "height": int(cube.shape[1]),
        "bands": list(bands),
        "dtype": "f32",
        "nodata": "nan",
        "transform": list(transform) if transform else None,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(json.dumps(header, sort_keys=True))
    bin_path.write_bytes(cube.tobytes())


def read_mask(path) -> np.ndarray:
    header_path, bin_path = _paths(path)
    header = json.loads(header_path.read_text())
    if header.get("dtype") != "u8":
        raise FgridError(f"{header_path}: expected dtype u8")
    w, h = header["width"], header["height"]
    raw = bin_path.read_bytes()
    if len(raw) != w * h:
        raise FgridError(f"{bin_path}: payload size mismatch")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()


def write_mask(values: np.ndarray, path) -> None:
    values = np.asarray(values, dtype=np.uint8)
    if values.ndim != 2:
        raise FgridError("mask must be 2-D")
    if not np.isin(values, (0, 1, MASK_NODATA)).all():
        raise FgridError("mask values must be 0, 1, or 255")
    header_path, bin_path = _paths(path)
    header = {
        "width": int(values.shape[1]),
        "height": int(values.shape[0]),
        "bands": ["Label"],
        "dtype": "u8",
        "nodata": MASK_NODATA,
        "transform": None,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text(json.dumps(header, sort_keys=True))
    bin_path.write_bytes(values.tobytes())
