"""NDWI computation and thresholding baselines (fixed threshold and Otsu).

Otsu's histogram uses 256 bins over the observed finite range.  The bin of
a value v is ``min(floor((v - lo) * (256 / (hi - lo))), 255)`` and candidate
thresholds are the 256 left bin edges ``lo + (k * (hi - lo)) / 256`` for
k = 0..255.  Candidate k puts bins below k in the low class.  Candidates
are ranked by exact integer arithmetic so that ties and near-ties resolve
identically everywhere: with N pixels, P below the split, T the total index
sum and S the below-split index sum, the between-class variance in
bin-index units is ``(S*N - T*P)**2 / (N*N * P * (N-P))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateInputError, ShapeError
from .raster import MASK_NODATA, Grid, Mask

N_BINS = 256


@dataclass(frozen=True)
class NdwiParams:
    """Epsilon guards the denominator when Green + NIR is zero."""

    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ShapeError(f"epsilon must be positive, got {self.epsilon}")


class ThresholdDirection(Enum):
    ABOVE_IS_FLOOD = "above"
    BELOW_IS_FLOOD = "below"


@dataclass(frozen=True)
class OtsuResult:
    threshold: float
    between_class_variance: float
    histogram: np.ndarray
    bin_edges: tuple[float, float]


def ndwi(green: Grid, nir: Grid, params: NdwiParams = NdwiParams()) -> Grid:
    """(Green - NIR) / (Green + NIR + epsilon), NaN propagating."""
    if green.values.shape != nir.values.shape:
        raise ShapeError("Green and NIR dimensions must match")
    g = green.values.astype(np.float64)
    n = nir.values.astype(np.float64)
    out = (g - n) / (g + n + params.epsilon)
    return Grid(out.astype(np.float32))


def _histogram(finite: np.ndarray, lo: float, hi: float) -> np.ndarray:
    scale = N_BINS / (hi - lo)
    idx = np.floor((finite - lo) * scale).astype(np.int64)
    np.clip(idx, 0, N_BINS - 1, out=idx)
    return np.bincount(idx, minlength=N_BINS)


def otsu_threshold(values: Grid) -> OtsuResult:
    """Threshold maximizing between-class variance; ties take the smallest.

    NaN pixels are excluded.  Raises on constant input or fewer than two
    finite values.
    """
    v = values.values.astype(np.float64)
    finite = v[np.isfinite(v)]
    if finite.size < 2:
        raise DegenerateInputError("Otsu needs at least two finite values")
    lo = float(finite.min())
    hi = float(finite.max())
    if lo == hi:
        raise DegenerateInputError("Otsu needs at least two distinct values")

    hist = _histogram(finite, lo, hi)
    n_total = int(hist.sum())
    idx = np.arange(N_BINS, dtype=np.int64)
    t_sum = int((hist * idx).sum())

    # Exact rational ranking: sigma_b^2(k) = num_k^2 / den_k with integer
    # num/den.  Python ints avoid overflow and make the argmax portable.
    p_below = np.concatenate(([0], np.cumsum(hist)))[:N_BINS]
    s_below = np.concatenate(([0], np.cumsum(hist * idx)))[:N_BINS]
    best_k = 0
    best_num_sq = -1
    best_den = 1
    for k in range(N_BINS):
        p = int(p_below[k])
        if p == 0 or p == n_total:
            continue
        num = int(s_below[k]) * n_total - t_sum * p
        num_sq = num * num
        den = n_total * n_total * p * (n_total - p)
        # strict improvement keeps the smallest k on exact ties
        if num_sq * best_den > best_num_sq * den:
            best_k, best_num_sq, best_den = k, num_sq, den

    bin_width = (hi - lo) / N_BINS
    threshold = lo + (best_k * (hi - lo)) / N_BINS
    variance = (float(best_num_sq) / float(best_den)) * bin_width * bin_width if best_num_sq > 0 else 0.0
    return OtsuResult(
        threshold=threshold,
        between_class_variance=variance,
        histogram=hist,
        bin_edges=(lo, hi),
    )


def apply_threshold(
    values: Grid, threshold: float, direction: ThresholdDirection
) -> Mask:
    """Strict comparison against the threshold; NaN maps to nodata (255).

    Pixels equal to the threshold are classified 0 in either direction.
    """
    v = values.values
    nan = np.isnan(v)
    if direction is ThresholdDirection.ABOVE_IS_FLOOD:
        flood = v > threshold
    elif direction is ThresholdDirection.BELOW_IS_FLOOD:
        flood = v < threshold
    else:
        raise ShapeError(f"unknown threshold direction {direction!r}")
    out = np.where(flood, 1, 0).astype(np.uint8)
    out[nan] = MASK_NODATA
    return Mask(out)
