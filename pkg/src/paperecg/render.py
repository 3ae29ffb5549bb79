"""Calibrated paper rasterization: layout planning, drawing, degradations.

Geometry is planned in millimeters and converted to pixels with
px = mm * dpi / 25.4. The page holds rows x cols segment panels (one lead
each, consecutive time windows across a row) plus a full-width rhythm
strip at the bottom. Panel baselines sit at the vertical center of their
row band. The calibration grid covers the whole page.

Degradations are applied after drawing: Gaussian intensity noise first,
then rotation about the image center with white fill. The pixel masks kept
on a RenderScene describe the page before degradations.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ValidationError
from .wfdb_io import STANDARD_LEADS, SignalSet

MM_PER_INCH = 25.4

#: Row-major panel order: limb leads, augmented leads, V1-V3, V4-V6.
DEFAULT_LEAD_ORDER = ("I", "aVR", "V1", "V4",
                      "II", "aVL", "V2", "V5",
                      "III", "aVF", "V3", "V6")


def mm_to_px(mm: float, dpi: float) -> float:
    return mm * dpi / MM_PER_INCH


@dataclass(frozen=True)
class PaperLayout:
    """Page geometry and calibration constants.

    Scales follow clinical paper: 25 mm/s, 10 mm/mV, a 1 mm small grid and
    a 5 mm large grid. rows * cols must equal 12 and segment_s * cols must
    equal rhythm_s so the rhythm strip spans exactly one full row of
    consecutive segment windows.
    """

    mm_per_s: float = 25.0
    mm_per_mv: float = 10.0
    dpi: float = 200.0
    rows: int = 3
    cols: int = 4
    segment_s: float = 2.5
    rhythm_lead: str = "II"
    rhythm_s: float = 10.0
    margin_mm: float = 10.0
    small_grid_mm: float = 1.0
    large_grid_mm: float = 5.0
    row_height_mm: float = 50.0
    lead_order: tuple[str, ...] = DEFAULT_LEAD_ORDER

    def __post_init__(self):
        object.__setattr__(self, "lead_order", tuple(self.lead_order))
        for name in ("mm_per_s", "mm_per_mv", "dpi", "segment_s", "rhythm_s",
                     "small_grid_mm", "large_grid_mm", "row_height_mm"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.margin_mm < 0:
            raise ValidationError("margin_mm must be non-negative")
        if self.rows * self.cols != 12:
            raise ValidationError(
                f"rows * cols must be 12, got {self.rows}x{self.cols}")
        if not np.isclose(self.segment_s * self.cols, self.rhythm_s):
            raise ValidationError(
                f"segment_s * cols must equal rhythm_s "
                f"({self.segment_s} * {self.cols} != {self.rhythm_s})")
        ratio = self.large_grid_mm / self.small_grid_mm
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValidationError(
                "large_grid_mm must be an integer multiple of small_grid_mm")
        if sorted(self.lead_order) != sorted(STANDARD_LEADS):
            raise ValidationError(
                "lead_order must be a permutation of the 12 standard leads")
        if self.rhythm_lead not in STANDARD_LEADS:
            raise ValidationError(f"unknown rhythm lead {self.rhythm_lead!r}")

    @property
    def px_per_mm(self) -> float:
        return self.dpi / MM_PER_INCH

    @property
    def page_width_mm(self) -> float:
        return 2.0 * self.margin_mm + self.rhythm_s * self.mm_per_s

    @property
    def page_height_mm(self) -> float:
        return 2.0 * self.margin_mm + (self.rows + 1) * self.row_height_mm

    @property
    def width_px(self) -> int:
        return int(round(mm_to_px(self.page_width_mm, self.dpi)))

    @property
    def height_px(self) -> int:
        return int(round(mm_to_px(self.page_height_mm, self.dpi)))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lead_order"] = list(self.lead_order)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PaperLayout":
        kwargs = dict(d)
        if "lead_order" in kwargs:
            kwargs["lead_order"] = tuple(kwargs["lead_order"])
        return cls(**kwargs)


@dataclass(frozen=True)
class DegradationSpec:
    """Post-draw degradations and drawing intensities.

    Noise sigma is in 8-bit intensity units; rotation must stay within
    +/-5 degrees; the grid must render lighter than the trace.
    """

    gaussian_noise_sigma: float = 0.0
    rotation_deg: float = 0.0
    trace_thickness_px: int = 1
    grid_intensity: int = 200
    trace_intensity: int = 0

    def __post_init__(self):
        if self.gaussian_noise_sigma < 0:
            raise ValidationError("gaussian_noise_sigma must be >= 0")
        if abs(self.rotation_deg) > 5.0:
            raise ValidationError(
                f"|rotation_deg| must be <= 5, got {self.rotation_deg}")
        if self.trace_thickness_px < 1:
            raise ValidationError("trace_thickness_px must be >= 1")
        for name in ("grid_intensity", "trace_intensity"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise ValidationError(f"{name} must be in [0, 255], got {v}")
        if not self.grid_intensity > self.trace_intensity:
            raise ValidationError(
                "grid_intensity must be greater than trace_intensity")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        return cls(**d)


@dataclass(frozen=True)
class RasterImage:
    """8-bit grayscale raster with optional physical resolution."""

    pixels: np.ndarray
    dpi: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.dtype != np.uint8:
            raise ValidationError("pixels must be a 2-D uint8 array")
        object.__setattr__(self, "pixels", arr)
        if self.dpi is not None and not self.dpi > 0:
            raise ValidationError("dpi must be positive when present")

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class PanelPlacement:
    """One panel's lead, time window, and bounding box in millimeters.

    col is None for the rhythm strip. The baseline runs at the vertical
    center of the box.
    """

    lead: str
    t0_s: float
    t1_s: float
    x0_mm: float
    y0_mm: float
    x1_mm: float
    y1_mm: float
    row: int
    col: int | None

    @property
    def is_rhythm(self) -> bool:
        return self.col is None

    @property
    def baseline_y_mm(self) -> float:
        return 0.5 * (self.y0_mm + self.y1_mm)


@dataclass(frozen=True)
class PanelPixels:
    """Pixel-space geometry of a placed panel (pre-degradation)."""

    placement: PanelPlacement
    x0: int
    x1: int
    y0: int
    y1: int
    baseline_y: float


@dataclass(frozen=True)
class RenderScene:
    """A rendered page plus the ground truth used to draw it.

    grid_mask and trace_mask describe ink positions before noise and
    rotation are applied; with a non-identity degradation they no longer
    line up with the final image geometrically.
    """

    image: RasterImage
    layout: PaperLayout
    degradation: DegradationSpec
    seed: int
    panels: tuple[PanelPixels, ...]
    row_centers_px: tuple[float, ...]
    grid_mask: np.ndarray = field(repr=False)
    trace_mask: np.ndarray = field(repr=False)


def plan_panels(layout: PaperLayout) -> list[PanelPlacement]:
    """Lay out 12 segment panels row-major plus the rhythm strip."""
    seg_w_mm = layout.segment_s * layout.mm_per_s
    placements = []
    for row in range(layout.rows):
        y0 = layout.margin_mm + row * layout.row_height_mm
        for col in range(layout.cols):
            lead = layout.lead_order[row * layout.cols + col]
            x0 = layout.margin_mm + col * seg_w_mm
            placements.append(PanelPlacement(
                lead=lead,
                t0_s=col * layout.segment_s,
                t1_s=(col + 1) * layout.segment_s,
                x0_mm=x0, y0_mm=y0,
                x1_mm=x0 + seg_w_mm, y1_mm=y0 + layout.row_height_mm,
                row=row, col=col))
    y0 = layout.margin_mm + layout.rows * layout.row_height_mm
    placements.append(PanelPlacement(
        lead=layout.rhythm_lead,
        t0_s=0.0, t1_s=layout.rhythm_s,
        x0_mm=layout.margin_mm, y0_mm=y0,
        x1_mm=layout.margin_mm + layout.rhythm_s * layout.mm_per_s,
        y1_mm=y0 + layout.row_height_mm,
        row=layout.rows, col=None))
    return placements


def _shift_or(dst: np.ndarray, src: np.ndarray, dy: int, dx: int) -> None:
    h, w = src.shape
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    ys_src = slice(max(0, -dy), min(h, h - dy))
    xs_src = slice(max(0, -dx), min(w, w - dx))
    dst[ys, xs] |= src[ys_src, xs_src]


def _thicken(mask: np.ndarray, thickness: int) -> np.ndarray:
    if thickness <= 1:
        return mask
    out = np.zeros_like(mask)
    lo = -(thickness // 2)
    hi = thickness - thickness // 2
    for dy in range(lo, hi):
        for dx in range(lo, hi):
            _shift_or(out, mask, dy, dx)
    return out


def _draw_trace(trace_mask: np.ndarray, panel: PanelPixels, times: np.ndarray,
                lead_samples: np.ndarray, layout: PaperLayout) -> None:
    """Paint one panel's waveform as connected per-column vertical spans."""
    ppmm = layout.px_per_mm
    cols = np.arange(panel.x0, panel.x1)
    if cols.size == 0:
        return
    t = panel.placement.t0_s + (cols - panel.x0) / (layout.mm_per_s * ppmm)
    v = np.interp(t, times, lead_samples)
    y_f = panel.baseline_y - v * layout.mm_per_mv * ppmm
    lo = y_f.copy()
    hi = y_f.copy()
    if y_f.size > 1:
        mid = 0.5 * (y_f[:-1] + y_f[1:])
        np.minimum(lo[:-1], mid, out=lo[:-1])
        np.maximum(hi[:-1], mid, out=hi[:-1])
        np.minimum(lo[1:], mid, out=lo[1:])
        np.maximum(hi[1:], mid, out=hi[1:])
    r0 = np.clip(np.rint(lo).astype(int), panel.y0, panel.y1 - 1)
    r1 = np.clip(np.rint(hi).astype(int), panel.y0, panel.y1 - 1)
    for i, c in enumerate(cols):
        trace_mask[r0[i]:r1[i] + 1, c] = True


def render_scene(s: SignalSet, layout: PaperLayout | None = None,
                 degrade: DegradationSpec | None = None, seed: int = 0
                 ) -> RenderScene:
    """Render a record to a page and keep the drawing ground truth.

    Args:
        s: record to draw; must contain every lead the layout references
           and cover at least rhythm_s seconds.
        layout: page geometry (defaults to the standard 3x4 + rhythm page).
        degrade: intensities and degradations (defaults to a clean page).
        seed: noise generator seed; rendering is deterministic given
            (s, layout, degrade, seed).

    Returns:
        RenderScene whose image is the final degraded page.
    """
    layout = layout or PaperLayout()
    degrade = degrade or DegradationSpec()
    for name in set(layout.lead_order) | {layout.rhythm_lead}:
        if name not in s.lead_names:
            raise ValidationError(f"record is missing lead {name!r}")
    if s.duration_s < layout.rhythm_s - 0.5 / s.sampling_hz:
        raise ValidationError(
            f"record covers {s.duration_s:.3f} s but the layout needs "
            f"{layout.rhythm_s} s")
    ppmm = layout.px_per_mm
    W, H = layout.width_px, layout.height_px
    canvas = np.full((H, W), 255, dtype=np.uint8)

    grid_mask = np.zeros((H, W), dtype=bool)
    n_x = int(np.floor(layout.page_width_mm / layout.small_grid_mm))
    xs = {int(round(k * layout.small_grid_mm * ppmm)) for k in range(n_x + 1)}
    xs = sorted(x for x in xs if 0 <= x < W)
    n_y = int(np.floor(layout.page_height_mm / layout.small_grid_mm))
    ys = {int(round(k * layout.small_grid_mm * ppmm)) for k in range(n_y + 1)}
    ys = sorted(y for y in ys if 0 <= y < H)
    grid_mask[:, xs] = True
    grid_mask[ys, :] = True

    panels = []
    for placement in plan_panels(layout):
        panels.append(PanelPixels(
            placement=placement,
            x0=int(round(placement.x0_mm * ppmm)),
            x1=int(round(placement.x1_mm * ppmm)),
            y0=int(round(placement.y0_mm * ppmm)),
            y1=int(round(placement.y1_mm * ppmm)),
            baseline_y=placement.baseline_y_mm * ppmm))

    trace_mask = np.zeros((H, W), dtype=bool)
    times = np.arange(s.n_samples) / s.sampling_hz
    for panel in panels:
        _draw_trace(trace_mask, panel, times, s.lead(panel.placement.lead),
                    layout)
    trace_mask = _thicken(trace_mask, degrade.trace_thickness_px)

    canvas[grid_mask] = degrade.grid_intensity
    canvas[trace_mask] = degrade.trace_intensity

    if degrade.gaussian_noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noisy = canvas.astype(np.float64) + rng.normal(
            0.0, degrade.gaussian_noise_sigma, size=canvas.shape)
        canvas = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    if degrade.rotation_deg != 0.0:
        im = Image.fromarray(canvas, mode="L")
        im = im.rotate(degrade.rotation_deg,
                       resample=Image.Resampling.BILINEAR,
                       expand=False, fillcolor=255)
        canvas = np.asarray(im, dtype=np.uint8)

    row_centers = tuple(
        (layout.margin_mm + (r + 0.5) * layout.row_height_mm) * ppmm
        for r in range(layout.rows + 1))
    return RenderScene(image=RasterImage(pixels=canvas, dpi=layout.dpi),
                       layout=layout, degradation=degrade, seed=seed,
                       panels=tuple(panels), row_centers_px=row_centers,
                       grid_mask=grid_mask, trace_mask=trace_mask)


def render(s: SignalSet, layout: PaperLayout | None = None,
           degrade: DegradationSpec | None = None, seed: int = 0) -> RasterImage:
    """Render a record to a grayscale page image."""
    return render_scene(s, layout, degrade, seed).image


def save_png(image: RasterImage, path: str) -> None:
    """Write a grayscale PNG, embedding dpi in the physical-size metadata."""
    im = Image.fromarray(image.pixels, mode="L")
    if image.dpi is not None:
        im.save(path, format="PNG", dpi=(image.dpi, image.dpi))
    else:
        im.save(path, format="PNG")


def load_image(path: str) -> tuple[np.ndarray, float | None]:
    """Read an image file to an array plus the dpi stored in its metadata.

    Returns a 2-D uint8 array for grayscale sources and an (H, W, 3) array
    for color sources.
    """
    with Image.open(path) as im:
        dpi_info = im.info.get("dpi")
        dpi = float(dpi_info[0]) if dpi_info else None
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.uint8)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr, dpi


def save_manifest(path: str, layout: PaperLayout, degrade: DegradationSpec,
                  seed: int, record_name: str = "") -> None:
    """Write the sidecar JSON describing how a page was rendered."""
    manifest = {
        "record": record_name,
        "seed": seed,
        "dpi": layout.dpi,
        "layout": layout.to_dict(),
        "degradation": degrade.to_dict(),
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
