"""Signal-row localization via smoothed horizontal projection profiles.

The detector projects ink counts onto the vertical axis, smooths with a
moving average, and takes maximal runs above a fraction of the profile
peak as row bands. It is deliberately detector-shaped: digitization asks
for a named detector from DETECTORS so an alternative implementation can
be plugged in without touching the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NoSignalError
from .preprocess import InkMask, mask_to_image
from .render import RasterImage, save_png


@dataclass(frozen=True)
class RowBand:
    """Half-open vertical span [y_top_px, y_bottom_px) of one signal row."""

    y_top_px: int
    y_bottom_px: int
    index: int

    def __post_init__(self):
        if not self.y_top_px < self.y_bottom_px:
            raise ValueError(
                f"band must have positive height, got "
                f"[{self.y_top_px}, {self.y_bottom_px})")

    @property
    def center(self) -> float:
        return 0.5 * (self.y_top_px + self.y_bottom_px - 1)

    @property
    def height(self) -> int:
        return self.y_bottom_px - self.y_top_px


@dataclass(frozen=True)
class RowDetectConfig:
    smoothing_px: int = 9
    band_fraction: float = 0.1
    merge_gap_px: int = 15
    pad_px: int = 10


@dataclass(frozen=True)
class RowDetection:
    bands: tuple[RowBand, ...]
    short_count: bool


def _runs_above(values: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    above = values >= threshold
    padded = np.concatenate(([False], above, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(edges[i]), int(edges[i + 1]))
            for i in range(0, edges.size, 2)]


def detect_rows(mask: InkMask, expected: int = 4,
                config: RowDetectConfig | None = None) -> RowDetection:
    """Find horizontal signal bands in an ink mask.

    Bands are maximal runs of rows whose smoothed ink density reaches
    band_fraction of the profile maximum; runs closer than merge_gap_px
    are merged. When more than `expected` bands remain, the highest-mass
    ones are kept; fewer sets short_count. Each band is padded by pad_px
    on both sides and clamped to the image, keeping bands disjoint.

    Raises NoSignalError for an empty mask.
    """
    config = config or RowDetectConfig()
    if not mask.ink.any():
        raise NoSignalError("mask has no ink; nothing to segment into rows")
    profile = mask.ink.sum(axis=1).astype(np.float64)
    window = max(1, int(config.smoothing_px))
    kernel = np.ones(window) / window
    smooth = np.convolve(profile, kernel, mode="same")
    threshold = config.band_fraction * smooth.max()
    runs = _runs_above(smooth, threshold)

    merged: list[list[int]] = []
    for start, end in runs:
        if merged and start - merged[-1][1] < config.merge_gap_px:
            merged[-1][1] = end
        else:
            merged.append([start, end])

    if len(merged) > expected:
        masses = [float(smooth[a:b].sum()) for a, b in merged]
        keep = sorted(sorted(range(len(merged)), key=lambda i: -masses[i])
                      [:expected])
        merged = [merged[i] for i in keep]

    height = mask.height_px
    padded = [[max(0, a - config.pad_px), min(height, b + config.pad_px)]
              for a, b in merged]
    for i in range(1, len(padded)):
        if padded[i][0] < padded[i - 1][1]:
            mid = (padded[i - 1][1] + padded[i][0]) // 2
            padded[i - 1][1] = mid
            padded[i][0] = mid
    bands = tuple(RowBand(y_top_px=a, y_bottom_px=b, index=i)
                  for i, (a, b) in enumerate(padded))
    return RowDetection(bands=bands, short_count=len(bands) < expected)


#: Named row detectors; digitization looks implementations up here.
DETECTORS = {"projection": detect_rows}


def get_detector(name: str):
    try:
        return DETECTORS[name]
    except KeyError:
        raise ConfigError(
            f"unknown row detector {name!r}; available: "
            f"{sorted(DETECTORS)}") from None


def band_overlay_png(mask: InkMask, bands, path: str,
                     dpi: float | None = None) -> None:
    """Debug image: the mask with band boundaries drawn as black rows."""
    img = mask_to_image(mask, dpi=dpi)
    pixels = img.pixels.copy()
    for band in bands:
        for y in (band.y_top_px, band.y_bottom_px - 1):
            if 0 <= y < pixels.shape[0]:
                pixels[y, :] = 0
    save_png(RasterImage(pixels=pixels, dpi=dpi), path)
