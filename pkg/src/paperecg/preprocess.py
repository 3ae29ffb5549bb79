"""Grayscale conversion, Otsu thresholding, and iterative grid removal.

Foreground convention used throughout the pipeline: ink == True == pixels
strictly darker than the threshold (intensity < t). Lowering the threshold
can only remove ink, never add it, which is what the grid-removal loop
relies on.

Grid removal follows a re-thresholding scheme: binarize at the Otsu
threshold, and while a calibration grid is still detectable in the mask,
shrink the threshold by 5% and binarize the original grayscale again. No
line subtraction takes place; lines fade because grid ink is lighter than
trace ink.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHistogramError, ValidationError
from .render import RasterImage, save_png

GRAY_WEIGHTS = (0.299, 0.587, 0.114)

THRESHOLD_DECAY = 0.95


@dataclass(frozen=True)
class InkMask:
    """Boolean foreground raster; True marks ink."""

    ink: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.ink)
        if arr.ndim != 2 or arr.dtype != np.bool_:
            raise ValidationError("ink must be a 2-D boolean array")
        object.__setattr__(self, "ink", arr)

    @property
    def height_px(self) -> int:
        return self.ink.shape[0]

    @property
    def width_px(self) -> int:
        return self.ink.shape[1]

    @property
    def count(self) -> int:
        return int(self.ink.sum())


@dataclass(frozen=True)
class GridEstimate:
    """Detected calibration-grid structure.

    period_px is 0.0 when no periodic structure was found; when lines were
    found it is the dominant spacing and is always greater than 2 px.
    confidence is the fraction of candidate lines whose neighbor spacing
    agrees with the period within 1 px.
    """

    period_px: float
    vertical_line_columns: tuple[int, ...]
    horizontal_line_rows: tuple[int, ...]
    confidence: float

    @property
    def n_lines(self) -> int:
        return len(self.vertical_line_columns) + len(self.horizontal_line_rows)


@dataclass(frozen=True)
class GridRemovalConfig:
    grid_visible_threshold: float = 0.35
    grid_line_fraction: float = 0.5
    t_floor_fraction: float = 0.3
    max_iters: int = 20
    debug_dir: str | None = None


@dataclass(frozen=True)
class GridRemovalResult:
    mask: InkMask
    iterations: int
    final_t: float
    initial_t: int
    grid_residual: bool
    grid_first: GridEstimate
    grid_final: GridEstimate


def to_grayscale(rgb: np.ndarray, dpi: float | None = None) -> RasterImage:
    """Convert an (H, W, 3) uint8 array with 0.299/0.587/0.114 weights."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError("expected an (H, W, 3) color array")
    luma = (GRAY_WEIGHTS[0] * arr[..., 0].astype(np.float64)
            + GRAY_WEIGHTS[1] * arr[..., 1]
            + GRAY_WEIGHTS[2] * arr[..., 2])
    pixels = np.clip(np.rint(luma), 0, 255).astype(np.uint8)
    return RasterImage(pixels=pixels, dpi=dpi)


def histogram(img: RasterImage) -> np.ndarray:
    return np.bincount(img.pixels.ravel(), minlength=256)


def otsu_threshold(hist: np.ndarray) -> int:
    """Between-class-variance threshold over the split "<= t vs > t".

    Comparisons use exact integer arithmetic, so the result always equals
    an exhaustive scan of all 256 candidate thresholds; ties go to the
    smallest t. A histogram with fewer than two occupied bins raises
    DegenerateHistogramError.
    """
    h = np.asarray(hist)
    if h.ndim != 1 or h.shape[0] != 256:
        raise ValidationError("hist must have 256 bins")
    if (h < 0).any():
        raise ValidationError("hist counts must be non-negative")
    counts = [int(c) for c in h]
    total = sum(counts)
    if sum(1 for c in counts if c > 0) < 2:
        raise DegenerateHistogramError(
            "histogram needs at least two occupied bins")
    total_sum = sum(i * c for i, c in enumerate(counts))
    # Between-class variance at split t is (S0*N - S*w0)^2 / (w0*w1) up to
    # a constant factor; compare candidates by cross-multiplication.
    best_t = -1
    best_num_sq = 0
    best_den = 1
    w0 = 0
    s0 = 0
    for t in range(256):
        w0 += counts[t]
        s0 += t * counts[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        num = s0 * total - total_sum * w0
        num_sq = num * num
        den = w0 * w1
        if best_t < 0 or num_sq * best_den > best_num_sq * den:
            best_t, best_num_sq, best_den = t, num_sq, den
    return best_t


def binarize(img: RasterImage, t: float) -> InkMask:
    """Threshold to ink: foreground is intensity strictly below t."""
    return InkMask(ink=img.pixels < t)


def mask_to_image(mask: InkMask, dpi: float | None = None) -> RasterImage:
    """Ink as black on white, for debug output."""
    pixels = np.where(mask.ink, 0, 255).astype(np.uint8)
    return RasterImage(pixels=pixels, dpi=dpi)


#: A sub-lag of the autocorrelation argmax counts as the fundamental when
#: its autocorrelation reaches this fraction of the argmax value. True
#: sub-periods score close to 1, spurious divisors score near or below 0.
FUNDAMENTAL_FRACTION = 0.6


def _dominant_period(profile: np.ndarray) -> float:
    """Fundamental period of a 1-D profile via autocorrelation.

    The raw argmax can land on a multiple of the line spacing (pixel
    rounding makes 5x the small-grid pitch self-match slightly better at
    some resolutions), so the argmax is walked down its integer divisors
    and the smallest lag still carrying most of the peak value wins.
    """
    x = profile.astype(np.float64)
    n = x.size
    if n < 8:
        return 0.0
    x = x - x.mean()
    if not np.any(x):
        return 0.0
    ac = np.correlate(x, x, mode="full")[n - 1:]
    max_lag = n // 2
    if max_lag < 3:
        return 0.0
    window = ac[3:max_lag + 1]
    if window.size == 0 or np.max(window) <= 0:
        return 0.0
    best = 3 + int(np.argmax(window))
    best_val = ac[best]
    lag = best
    for k in range(2, best // 3 + 1):
        approx = best / k
        lo = max(3, int(np.floor(approx)) - 1)
        hi = min(max_lag, int(np.ceil(approx)) + 1)
        sub = lo + int(np.argmax(ac[lo:hi + 1]))
        if ac[sub] >= FUNDAMENTAL_FRACTION * best_val:
            lag = min(lag, sub)
    return float(lag)


def _consistent_lines(positions: np.ndarray, period: float) -> int:
    if positions.size < 2:
        return 0
    gaps = np.diff(positions.astype(np.float64))
    ok_next = np.abs(gaps - period) <= 1.0
    consistent = np.zeros(positions.size, dtype=bool)
    consistent[:-1] |= ok_next
    consistent[1:] |= ok_next
    return int(consistent.sum())


def detect_grid(mask: InkMask, grid_line_fraction: float = 0.5) -> GridEstimate:
    """Look for an axis-aligned calibration grid in an ink mask.

    Candidate lines are columns (rows) whose ink count reaches
    grid_line_fraction of the image height (width). The spacing comes from
    the dominant positive lag of the column-profile autocorrelation, and
    confidence is the fraction of candidate lines consistent with that
    spacing within 1 px. No grid means confidence 0.0 and empty line lists.
    """
    ink = mask.ink
    h, w = ink.shape
    col_counts = ink.sum(axis=0)
    row_counts = ink.sum(axis=1)
    v_cols = np.flatnonzero(col_counts >= grid_line_fraction * h)
    h_rows = np.flatnonzero(row_counts >= grid_line_fraction * w)
    period = _dominant_period(col_counts)
    if period <= 2.0 or (v_cols.size + h_rows.size) == 0:
        return GridEstimate(period_px=0.0 if period <= 2.0 else period,
                            vertical_line_columns=tuple(int(c) for c in v_cols),
                            horizontal_line_rows=tuple(int(r) for r in h_rows),
                            confidence=0.0)
    consistent = (_consistent_lines(v_cols, period)
                  + _consistent_lines(h_rows, period))
    confidence = consistent / (v_cols.size + h_rows.size)
    return GridEstimate(period_px=period,
                        vertical_line_columns=tuple(int(c) for c in v_cols),
                        horizontal_line_rows=tuple(int(r) for r in h_rows),
                        confidence=float(confidence))


def remove_grid(gray: RasterImage, config: GridRemovalConfig | None = None
                ) -> GridRemovalResult:
    """Binarize and re-threshold until the calibration grid disappears.

    Starts at the Otsu threshold of the grayscale histogram. While
    detect_grid still reports confidence at or above
    grid_visible_threshold, the threshold shrinks by 5% and the original
    grayscale is binarized again. If the threshold would fall below
    t_floor_fraction * t0, or max_iters passes complete, the lowest-t mask
    is returned with grid_residual set.
    """
    config = config or GridRemovalConfig()
    t0 = otsu_threshold(histogram(gray))
    t = float(t0)
    t_floor = config.t_floor_fraction * t0
    grid_first = None
    iterations = 0
    while True:
        iterations += 1
        mask = binarize(gray, t)
        estimate = detect_grid(mask, config.grid_line_fraction)
        if grid_first is None:
            grid_first = estimate
        if config.debug_dir:
            os.makedirs(config.debug_dir, exist_ok=True)
            save_png(mask_to_image(mask, dpi=gray.dpi),
                     os.path.join(config.debug_dir,
                                  f"mask_iter{iterations:02d}.png"))
        if estimate.confidence < config.grid_visible_threshold:
            return GridRemovalResult(mask=mask, iterations=iterations,
                                     final_t=t, initial_t=t0,
                                     grid_residual=False,
                                     grid_first=grid_first,
                                     grid_final=estimate)
        t_next = t * THRESHOLD_DECAY
        if iterations >= config.max_iters or t_next < t_floor:
            return GridRemovalResult(mask=mask, iterations=iterations,
                                     final_t=t, initial_t=t0,
                                     grid_residual=True,
                                     grid_first=grid_first,
                                     grid_final=estimate)
        t = t_next
