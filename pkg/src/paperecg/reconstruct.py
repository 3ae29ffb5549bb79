"""Pixel-to-millivolt reconstruction and the full digitization pipeline.

digitize() chains the stages: grayscale conversion, iterative grid
removal, row-band detection, per-panel trace extraction, and calibrated
conversion back to a 12-lead record. Horizontal pixel scale comes from
image metadata when available and otherwise from the detected grid pitch;
the report records which source was used.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssemblyError,
    DigitizationError,
    NoSignalError,
    PaperEcgError,
    ReconstructionError,
    ValidationError,
)
from .preprocess import (
    GridRemovalConfig,
    InkMask,
    binarize,
    detect_grid,
    remove_grid,
    to_grayscale,
)
from .render import PaperLayout, RasterImage
from .row_detect import RowBand, RowDetectConfig, get_detector
from .trace_extract import (
    DEFAULT_ANGLE_WEIGHT,
    DEFAULT_MAX_RUN_PX,
    TracePath,
    fill_gaps,
    find_nodes,
    least_cost_path,
)
from .wfdb_io import SignalSet

#: Threshold used only to expose the grid for pitch calibration when the
#: image carries no resolution metadata. Near-white, so grid ink of any
#: plausible intensity lands in the mask.
CALIBRATION_BINARIZE_T = 245.0

MIN_GRID_CONFIDENCE_FOR_CALIBRATION = 0.3

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CalibrationParams:
    """Scale factors tying panel pixels to seconds and millivolts."""

    px_per_mm: float
    mm_per_s: float
    mm_per_mv: float
    baseline_y_px: float
    target_fs: float

    def __post_init__(self):
        for name in ("px_per_mm", "mm_per_s", "mm_per_mv", "target_fs"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class PanelSignal:
    """Reconstructed samples for one panel; col is None for the rhythm strip."""

    lead: str
    row: int
    col: int | None
    samples: np.ndarray
    baseline_y_px: float = 0.0
    path_cost: float = 0.0


@dataclass
class DigitizationReport:
    """What the pipeline did, JSON-serializable for batch aggregation."""

    schema_version: int = SCHEMA_VERSION
    calibration_source: str = ""
    px_per_mm: float = 0.0
    target_fs: float = 0.0
    initial_threshold: float = 0.0
    final_threshold: float = 0.0
    grid_removal_iterations: int = 0
    grid_residual: bool = False
    grid_period_px: float = 0.0
    grid_confidence: float = 0.0
    n_grid_lines: int = 0
    detector: str = ""
    bands: list = field(default_factory=list)
    bands_expanded: list = field(default_factory=list)
    short_count: bool = False
    panels: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    coverage: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "DigitizationReport":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def segment_panels(band: RowBand, layout: PaperLayout, image_width_px: int,
                   px_per_mm: float) -> list[tuple[int, int]]:
    """Column ranges of the panels inside one band.

    Bands below the last segment row hold the rhythm strip and map to a
    single range covering the full plotted width; other bands split the
    plotted width (image minus margins) into `cols` equal panels.
    """
    seg_w_mm = layout.segment_s * layout.mm_per_s
    if band.index < layout.rows:
        bounds = [int(round((layout.margin_mm + c * seg_w_mm) * px_per_mm))
                  for c in range(layout.cols + 1)]
    else:
        bounds = [int(round(layout.margin_mm * px_per_mm)),
                  int(round((layout.margin_mm
                             + layout.rhythm_s * layout.mm_per_s) * px_per_mm))]
    bounds = [min(max(b, 0), image_width_px) for b in bounds]
    ranges = list(zip(bounds[:-1], bounds[1:]))
    for x0, x1 in ranges:
        if not x1 > x0:
            raise ReconstructionError(
                f"band {band.index}: degenerate panel range [{x0}, {x1})")
    return ranges


def estimate_baseline(dense_y: np.ndarray) -> float:
    """Baseline row of a panel: the median of its dense path."""
    arr = np.asarray(dense_y, dtype=np.float64)
    if arr.size == 0:
        raise ReconstructionError("cannot estimate a baseline from no columns")
    return float(np.median(arr))


def path_to_signal(dense_y: np.ndarray, calib: CalibrationParams) -> np.ndarray:
    """Convert a dense pixel path to millivolt samples at target_fs.

    Column c maps to time c / (px_per_mm * mm_per_s) and value
    (baseline - y) / (px_per_mm * mm_per_mv); the samples are linear
    interpolations of that curve on the target-rate time grid.
    """
    arr = np.asarray(dense_y, dtype=np.float64)
    if arr.size < 2:
        raise ReconstructionError(
            f"panel needs at least 2 columns, got {arr.size}")
    cols_per_s = calib.px_per_mm * calib.mm_per_s
    duration = arr.size / cols_per_s
    mv = (calib.baseline_y_px - arr) / (calib.px_per_mm * calib.mm_per_mv)
    n_out = int(np.floor(duration * calib.target_fs))
    if n_out < 1:
        raise ReconstructionError(
            f"panel spans {duration:.4f} s, shorter than one output sample")
    t_out = np.arange(n_out) / calib.target_fs
    return np.interp(t_out * cols_per_s, np.arange(arr.size), mv)


def coverage_to_intervals(mask: np.ndarray) -> list[list[int]]:
    padded = np.concatenate(([False], np.asarray(mask, dtype=bool), [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [[int(edges[i]), int(edges[i + 1])]
            for i in range(0, edges.size, 2)]


def intervals_to_coverage(intervals, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for start, stop in intervals:
        mask[max(0, int(start)):min(n, int(stop))] = True
    return mask


def assemble_record(panels: list[PanelSignal], layout: PaperLayout,
                    target_fs: float) -> tuple[SignalSet, dict[str, np.ndarray]]:
    """Place panel signals on a rhythm_s-long timeline per lead.

    Segment (row, col) panels land at their column's time window; samples
    never observed stay zero and the per-lead coverage map marks what was.
    When the rhythm panel's lead also appears as a segment, the rhythm
    strip fills only the intervals the segment did not cover.

    Raises AssemblyError when any of the rows*cols segment panels is
    missing (the rhythm panel is optional) or a lead appears twice.
    """
    n = int(round(layout.rhythm_s * target_fs))
    by_pos: dict[tuple[int, int], PanelSignal] = {}
    rhythm: PanelSignal | None = None
    for panel in panels:
        if panel.col is None:
            if rhythm is not None:
                raise AssemblyError("more than one rhythm panel")
            rhythm = panel
            continue
        key = (panel.row, panel.col)
        if key in by_pos:
            raise AssemblyError(f"duplicate panel at (row {key[0]}, col {key[1]})")
        by_pos[key] = panel
    lead_names = layout.lead_order
    samples = np.zeros((len(lead_names), n))
    coverage = {name: np.zeros(n, dtype=bool) for name in lead_names}
    for row in range(layout.rows):
        for col in range(layout.cols):
            panel = by_pos.get((row, col))
            if panel is None:
                raise AssemblyError(f"missing panel (row {row}, col {col})")
            lead_idx = row * layout.cols + col
            name = lead_names[lead_idx]
            if panel.lead != name:
                raise AssemblyError(
                    f"panel (row {row}, col {col}) carries {panel.lead!r}, "
                    f"layout expects {name!r}")
            offset = int(round(col * layout.segment_s * target_fs))
            window_end = min(n, int(round((col + 1) * layout.segment_s
                                          * target_fs)))
            take = min(panel.samples.size, window_end - offset)
            if take <= 0:
                continue
            samples[lead_idx, offset:offset + take] = panel.samples[:take]
            coverage[name][offset:offset + take] = True
    if rhythm is not None:
        if rhythm.lead not in lead_names:
            raise AssemblyError(f"rhythm lead {rhythm.lead!r} not in layout")
        lead_idx = lead_names.index(rhythm.lead)
        take = min(rhythm.samples.size, n)
        observed = np.zeros(n, dtype=bool)
        observed[:take] = True
        fill = observed & ~coverage[rhythm.lead]
        samples[lead_idx, fill] = rhythm.samples[:take][fill[:take]]
        coverage[rhythm.lead] |= fill
    return (SignalSet(sampling_hz=target_fs, lead_names=lead_names,
                      samples=samples),
            coverage)


def _expand_bands(bands: list[RowBand], height: int) -> list[RowBand]:
    """Stretch detected bands toward the midpoints between their centers.

    Detected bands hug the dense part of each trace; extraction needs room
    for full peak excursions, so each band grows symmetrically until
    halfway to its neighbors (mirrored at the outer bands), clamped to the
    image.
    """
    if len(bands) == 1:
        return [RowBand(0, height, bands[0].index)]
    centers = [b.center for b in bands]
    cuts = [0.5 * (centers[i] + centers[i + 1]) for i in range(len(centers) - 1)]
    expanded = []
    for i, band in enumerate(bands):
        top = cuts[i - 1] if i > 0 else centers[0] - (cuts[0] - centers[0])
        bottom = (cuts[i] if i < len(cuts)
                  else centers[-1] + (centers[-1] - cuts[-1]))
        y0 = max(0, int(np.floor(top)))
        y1 = min(height, int(np.ceil(bottom)))
        y0 = min(y0, band.y_top_px)
        y1 = max(y1, band.y_bottom_px)
        expanded.append(RowBand(y_top_px=y0, y_bottom_px=y1, index=band.index))
    return expanded


def _estimate_px_per_mm(gray: RasterImage, layout: PaperLayout,
                        report: DigitizationReport) -> float:
    """Fallback pitch calibration from the grid when metadata is absent.

    The autocorrelation period is integer-valued, so when enough grid
    lines were found the pitch is refined to the mean line spacing over
    the full detected span, which recovers the sub-pixel pitch.
    """
    calib_mask = binarize(gray, CALIBRATION_BINARIZE_T)
    estimate = detect_grid(calib_mask)
    if (estimate.period_px <= 2.0
            or estimate.confidence < MIN_GRID_CONFIDENCE_FOR_CALIBRATION):
        raise NoSignalError(
            "image has no resolution metadata and no detectable grid to "
            "calibrate against")
    period = estimate.period_px
    cols = np.asarray(estimate.vertical_line_columns, dtype=np.float64)
    if cols.size >= 2:
        gaps = np.diff(cols)
        regular = np.abs(gaps - period) <= 1.0
        if regular.all():
            span_mean = (cols[-1] - cols[0]) / (cols.size - 1)
            if abs(span_mean - period) <= 1.0:
                period = float(span_mean)
    report.warnings.append(
        "px_per_mm estimated from grid pitch; no metadata present")
    return period / layout.small_grid_mm


def digitize(image: RasterImage | np.ndarray,
             layout: PaperLayout | None = None,
             *,
             detector: str = "projection",
             target_fs: float = 1000.0,
             grid_config: GridRemovalConfig | None = None,
             row_config: RowDetectConfig | None = None,
             angle_weight: float = DEFAULT_ANGLE_WEIGHT,
             max_run_px: int = DEFAULT_MAX_RUN_PX,
             px_per_mm_override: float | None = None
             ) -> tuple[SignalSet, DigitizationReport]:
    """Digitize a rendered or scanned page back to a 12-lead record.

    Args:
        image: grayscale RasterImage, 2-D uint8 array, or (H, W, 3) color
            array.
        layout: geometry hints; defaults to the standard page.
        detector: name of the row detector to use (see row_detect.DETECTORS).
        target_fs: output sampling rate in Hz.
        grid_config / row_config: stage tuning, defaults as documented.
        angle_weight / max_run_px: trace extraction tuning.
        px_per_mm_override: trust this scale instead of metadata or grid.

    Returns:
        (SignalSet, DigitizationReport). Stage failures raise
        DigitizationError carrying the stage name and the partial report.

    The record is deterministic: equal inputs produce equal output bytes.
    """
    layout = layout or PaperLayout()
    report = DigitizationReport(detector=detector, target_fs=target_fs)
    stage = "input"
    try:
        if isinstance(image, RasterImage):
            gray = image
        else:
            arr = np.asarray(image)
            if arr.ndim == 3:
                gray = to_grayscale(arr)
            else:
                gray = RasterImage(pixels=arr.astype(np.uint8), dpi=None)

        stage = "calibration"
        if px_per_mm_override is not None:
            px_per_mm = float(px_per_mm_override)
            report.calibration_source = "override"
        elif gray.dpi is not None:
            px_per_mm = gray.dpi / 25.4
            report.calibration_source = "metadata"
        else:
            px_per_mm = _estimate_px_per_mm(gray, layout, report)
            report.calibration_source = "grid-estimated"
        report.px_per_mm = px_per_mm

        stage = "preprocess"
        removal = remove_grid(gray, grid_config)
        report.initial_threshold = float(removal.initial_t)
        report.final_threshold = float(removal.final_t)
        report.grid_removal_iterations = removal.iterations
        report.grid_residual = removal.grid_residual
        report.grid_period_px = removal.grid_first.period_px
        report.grid_confidence = removal.grid_first.confidence
        report.n_grid_lines = removal.grid_first.n_lines
        if removal.grid_residual:
            report.warnings.append(
                "grid still detectable at the threshold floor")

        stage = "row_detect"
        detect = get_detector(detector)
        detection = detect(removal.mask, expected=layout.rows + 1,
                           config=row_config)
        bands = list(detection.bands)
        report.short_count = detection.short_count
        report.bands = [[b.y_top_px, b.y_bottom_px] for b in bands]
        if len(bands) < layout.rows:
            raise NoSignalError(
                f"found {len(bands)} signal bands, need at least {layout.rows}")
        if detection.short_count:
            report.warnings.append(
                f"found {len(bands)} bands, expected {layout.rows + 1}; "
                "proceeding without a rhythm strip")
        expanded = _expand_bands(bands, gray.height_px)
        report.bands_expanded = [[b.y_top_px, b.y_bottom_px] for b in expanded]

        stage = "trace_extract"
        panel_signals = []
        for band in expanded:
            if band.index > layout.rows:
                report.warnings.append(
                    f"ignoring unexpected extra band {band.index}")
                continue
            nodes = find_nodes(removal.mask, band, max_run_px=max_run_px)
            ranges = segment_panels(band, layout, gray.width_px, px_per_mm)
            for c, (x0, x1) in enumerate(ranges):
                panel_nodes = [nodes[i] if x0 <= i < x1 else []
                               for i in range(len(nodes))]
                is_rhythm = band.index == layout.rows
                lead = (layout.rhythm_lead if is_rhythm
                        else layout.lead_order[band.index * layout.cols + c])
                try:
                    path = least_cost_path(panel_nodes, band, angle_weight)
                    dense = fill_gaps(path, x0, x1)
                    baseline = estimate_baseline(dense)
                    calib = CalibrationParams(
                        px_per_mm=px_per_mm, mm_per_s=layout.mm_per_s,
                        mm_per_mv=layout.mm_per_mv, baseline_y_px=baseline,
                        target_fs=target_fs)
                    samples = path_to_signal(dense, calib)
                except PaperEcgError as exc:
                    report.warnings.append(
                        f"band {band.index} panel {c} ({lead}): {exc}")
                    continue
                panel_signals.append(PanelSignal(
                    lead=lead, row=band.index,
                    col=None if is_rhythm else c,
                    samples=samples, baseline_y_px=baseline,
                    path_cost=path.total_cost))
                report.panels.append({
                    "row": band.index,
                    "col": None if is_rhythm else c,
                    "lead": lead,
                    "x0": x0, "x1": x1,
                    "baseline_y_px": baseline,
                    "path_cost": path.total_cost,
                    "n_path_nodes": len(path.entries),
                })

        stage = "assemble"
        record, coverage = assemble_record(panel_signals, layout, target_fs)
        report.coverage = {name: coverage_to_intervals(coverage[name])
                           for name in record.lead_names}
        return record, report
    except PaperEcgError as exc:
        raise DigitizationError(stage, str(exc), report) from exc
