"""Paper-ECG round-trip toolkit.

Renders 12-lead ECG records onto calibrated synthetic paper pages,
digitizes such pages back to time series, and scores the round-trip
fidelity. See the README for the command-line interface.
"""

from .errors import (
    AggregationError,
    AlignmentError,
    AssemblyError,
    ConfigError,
    CsvFormatError,
    DegenerateHistogramError,
    DigitizationError,
    HeaderParseError,
    NoSignalError,
    PaperEcgError,
    RangeError,
    ReconstructionError,
    TruncationError,
    UnsupportedFormatError,
    ValidationError,
)
from .wfdb_io import (
    STANDARD_LEADS,
    LeadSpec,
    RecordHeader,
    SignalSet,
    parse_header,
    read_csv,
    read_record_files,
    read_signals,
    render_header,
    write_csv,
    write_record,
    write_record_files,
)
from .synth import BeatModel, beat_model, synth_ecg
from .render import (
    DegradationSpec,
    PaperLayout,
    RasterImage,
    RenderScene,
    load_image,
    render,
    render_scene,
    save_png,
)
from .preprocess import (
    GridEstimate,
    GridRemovalConfig,
    GridRemovalResult,
    InkMask,
    binarize,
    detect_grid,
    histogram,
    otsu_threshold,
    remove_grid,
    to_grayscale,
)
from .row_detect import DETECTORS, RowBand, RowDetection, detect_rows
from .trace_extract import (
    CandidateNode,
    TracePath,
    edge_cost,
    fill_gaps,
    find_nodes,
    least_cost_path,
)
from .reconstruct import (
    CalibrationParams,
    DigitizationReport,
    PanelSignal,
    assemble_record,
    digitize,
    estimate_baseline,
    path_to_signal,
    segment_panels,
)
from .metrics import (
    MetricsReport,
    align,
    asci,
    ks_metric,
    report,
    snr_aggregates,
    snr_db,
    wad,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationError", "AlignmentError", "AssemblyError", "ConfigError",
    "CsvFormatError", "DegenerateHistogramError", "DigitizationError",
    "HeaderParseError", "NoSignalError", "PaperEcgError", "RangeError",
    "ReconstructionError", "TruncationError", "UnsupportedFormatError",
    "ValidationError",
    "STANDARD_LEADS", "LeadSpec", "RecordHeader", "SignalSet",
    "parse_header", "read_csv", "read_record_files", "read_signals",
    "render_header", "write_csv", "write_record", "write_record_files",
    "BeatModel", "beat_model", "synth_ecg",
    "DegradationSpec", "PaperLayout", "RasterImage", "RenderScene",
    "load_image", "render", "render_scene", "save_png",
    "GridEstimate", "GridRemovalConfig", "GridRemovalResult", "InkMask",
    "binarize", "detect_grid", "histogram", "otsu_threshold", "remove_grid",
    "to_grayscale",
    "DETECTORS", "RowBand", "RowDetection", "detect_rows",
    "CandidateNode", "TracePath", "edge_cost", "fill_gaps", "find_nodes",
    "least_cost_path",
    "CalibrationParams", "DigitizationReport", "PanelSignal",
    "assemble_record", "digitize", "estimate_baseline", "path_to_signal",
    "segment_panels",
    "MetricsReport", "align", "asci", "ks_metric", "report",
    "snr_aggregates", "snr_db", "wad",
    "__version__",
]
