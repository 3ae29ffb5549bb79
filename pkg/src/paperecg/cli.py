"""Batch command-line interface.

Subcommands: gen-corpus, render, digitize, evaluate, roundtrip. Each takes
its settings from (in override order) built-in defaults, a JSON config
file passed with --config, and command-line flags that mirror the config
keys 1:1. Unknown config keys are rejected. Every subcommand is
deterministic given its config and seed, and exits 0 on full success,
2 when some records failed, and 1 on fatal or configuration errors.

Batch subcommands process records in parallel worker processes (one per
CPU by default) with per-record isolation: a corrupt input logs an error
row and the batch continues.
"""

import argparse
import csv
import dataclasses
import glob
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics as metrics_mod
from .errors import ConfigError, DigitizationError, PaperEcgError
from .reconstruct import DigitizationReport, digitize
from .render import DegradationSpec, PaperLayout, RasterImage, load_image, \
    render, save_png
from .preprocess import to_grayscale
from .row_detect import DETECTORS, get_detector
from .synth import synth_ecg
from .wfdb_io import read_record_files, write_csv, write_record_files

log = logging.getLogger("paperecg")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2

HEART_RATE_SAMPLING_RANGE_BPM = (55.0, 95.0)


@dataclass
class GenCorpusConfig:
    out_dir: str = "corpus"
    count: int = 20
    duration_s: float = 10.0
    sampling_hz: float = 1000.0
    heart_rate_bpm: float | None = None
    gain: float = 2000.0
    write_csv: bool = True
    seed: int = 0
    workers: int = 1


@dataclass
class RenderConfig:
    in_dir: str = "corpus"
    out_dir: str = "renders"
    dpi: float = 200.0
    noise_sigma: float = 0.0
    rotation_deg: float = 0.0
    trace_thickness_px: int = 1
    grid_intensity: int = 200
    trace_intensity: int = 0
    seed: int = 0
    workers: int = 0


@dataclass
class DigitizeConfig:
    in_dir: str = "renders"
    out_dir: str = "digitized"
    detector: str = "projection"
    target_fs: float = 1000.0
    px_per_mm: float | None = None
    gain: float = 2000.0
    seed: int = 0
    workers: int = 0


@dataclass
class EvaluateConfig:
    ref_dir: str = "corpus"
    est_dir: str = "digitized"
    out_dir: str = "metrics"
    max_lag_s: float = 0.5
    asci_beta: float = 0.05
    use_coverage: bool = True
    seed: int = 0
    workers: int = 0


@dataclass
class RoundtripConfig:
    out_dir: str = "roundtrip"
    count: int = 20
    duration_s: float = 10.0
    sampling_hz: float = 1000.0
    heart_rate_bpm: float | None = None
    gain: float = 2000.0
    write_csv: bool = False
    dpi: float = 200.0
    noise_sigma: float = 0.0
    rotation_deg: float = 0.0
    trace_thickness_px: int = 1
    grid_intensity: int = 200
    trace_intensity: int = 0
    detector: str = "projection"
    max_lag_s: float = 0.5
    asci_beta: float = 0.05
    use_coverage: bool = True
    seed: int = 0
    workers: int = 0


#: Flag help strings, one entry per config field (keys shared across the
#: config classes that declare the field).
FIELD_HELP = {
    "out_dir": "directory to write outputs into (created if missing)",
    "in_dir": "directory holding the inputs",
    "ref_dir": "directory holding the reference records (.hea/.dat)",
    "est_dir": "directory holding the digitized records and reports",
    "count": "number of records to generate",
    "duration_s": "record duration in seconds",
    "sampling_hz": "sampling rate in Hz",
    "heart_rate_bpm": "fixed heart rate; omit to sample 55-95 bpm per record",
    "gain": "ADC gain (levels per mV) for written records",
    "write_csv": "also write a CSV per generated record",
    "dpi": "render resolution in dots per inch",
    "noise_sigma": "Gaussian intensity noise sigma (8-bit units)",
    "rotation_deg": "page rotation in degrees (|deg| <= 5)",
    "trace_thickness_px": "trace line thickness in pixels",
    "grid_intensity": "grid ink intensity, 0 black - 255 white",
    "trace_intensity": "trace ink intensity, 0 black - 255 white",
    "detector": f"row detector, one of: {', '.join(sorted(DETECTORS))}",
    "target_fs": "output sampling rate of digitized records in Hz",
    "px_per_mm": "trust this scale instead of image metadata or the grid",
    "max_lag_s": "alignment search half-window in seconds (0 disables)",
    "asci_beta": "ASCI tolerance as a fraction of the reference range",
    "use_coverage": "score only samples the digitizer actually observed",
}

#: Fields whose default is None, so the flag type cannot be inferred.
OPTIONAL_FLOAT_FIELDS = {"heart_rate_bpm", "px_per_mm"}

#: Set once per run by global flags, so they are not duplicated per
#: subcommand.
GLOBAL_FIELDS = {"seed", "workers"}


def _field_type(f: dataclasses.Field):
    if f.name in OPTIONAL_FLOAT_FIELDS:
        return float
    return type(f.default)


def _add_config_flags(parser: argparse.ArgumentParser, cls) -> None:
    for f in dataclasses.fields(cls):
        if f.name in GLOBAL_FIELDS:
            continue
        flag = "--" + f.name.replace("_", "-")
        help_text = f"{FIELD_HELP[f.name]} (default: {f.default})"
        if _field_type(f) is bool:
            parser.add_argument(flag, dest=f.name,
                                action=argparse.BooleanOptionalAction,
                                default=None, help=help_text)
        else:
            parser.add_argument(flag, dest=f.name, type=_field_type(f),
                                default=None, help=help_text)


def _coerce(cls, name: str, value):
    """Check a config-file value against its field's type, or raise."""
    f = {f.name: f for f in dataclasses.fields(cls)}[name]
    want = _field_type(f)
    if value is None and f.name in OPTIONAL_FLOAT_FIELDS:
        return None
    if want is float and isinstance(value, (int, float)) \
            and not isinstance(value, bool):
        return float(value)
    if want is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if want is bool and isinstance(value, bool):
        return value
    if want is str and isinstance(value, str):
        return value
    raise ConfigError(
        f"config key {name!r}: expected {want.__name__}, got {value!r}")


def resolve_config(cls, args: argparse.Namespace):
    """Merge defaults, the optional JSON config file, and flags."""
    values = {f.name: f.default for f in dataclasses.fields(cls)}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_values) - set(values))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in file_values.items():
            values[key] = _coerce(cls, key, value)
    for f in dataclasses.fields(cls):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    if args.seed is not None:
        values["seed"] = args.seed
    if args.workers is not None:
        values["workers"] = args.workers
    config = cls(**values)
    _validate_config(config)
    return config


def _validate_config(config) -> None:
    checks = {
        "count": lambda v: v >= 0,
        "duration_s": lambda v: v > 0,
        "sampling_hz": lambda v: v > 0,
        "heart_rate_bpm": lambda v: v is None or v > 0,
        "gain": lambda v: v > 0,
        "dpi": lambda v: v > 0,
        "target_fs": lambda v: v > 0,
        "px_per_mm": lambda v: v is None or v > 0,
        "max_lag_s": lambda v: v >= 0,
        "asci_beta": lambda v: 0 < v < 1,
        "workers": lambda v: v >= 0,
    }
    for f in dataclasses.fields(config):
        check = checks.get(f.name)
        if check and not check(getattr(config, f.name)):
            raise ConfigError(
                f"config key {f.name!r}: bad value {getattr(config, f.name)!r}")


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv_rows(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in fieldnames})


def _csv_cell(value):
    if isinstance(value, float):
        if value == math.inf:
            return "inf"
        if value == -math.inf:
            return "-inf"
        return repr(value)
    if value is None:
        return ""
    return value


def _n_workers(requested: int, n_tasks: int) -> int:
    n = requested if requested > 0 else (os.cpu_count() or 1)
    return max(1, min(n, n_tasks))


def _run_batch(tasks: list, worker, workers: int) -> list[dict]:
    n = _n_workers(workers, len(tasks))
    if n == 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(worker, tasks))


def _log_rows(rows: list[dict]) -> int:
    """Log per-record outcomes; return the count of failed records."""
    failures = 0
    for row in rows:
        if row.get("status") == "error":
            failures += 1
            log.error("%s: %s", row.get("record", "?"), row.get("error", ""))
        else:
            log.debug("%s: ok", row.get("record", "?"))
    return failures


def _discover(in_dir: str, pattern: str) -> list[str]:
    if not os.path.isdir(in_dir):
        raise ConfigError(f"input directory does not exist: {in_dir}")
    paths = sorted(glob.glob(os.path.join(glob.escape(in_dir), pattern)))
    if not paths:
        raise ConfigError(f"no {pattern} inputs under {in_dir}")
    return paths


def cmd_gen_corpus(config: GenCorpusConfig) -> int:
    """Generate `count` seeded synthetic records plus a manifest."""
    os.makedirs(config.out_dir, exist_ok=True)
    entries = []
    for i in range(config.count):
        name = f"rec{i:03d}"
        if config.heart_rate_bpm is not None:
            hr = config.heart_rate_bpm
        else:
            lo, hi = HEART_RATE_SAMPLING_RANGE_BPM
            hr = float(np.random.default_rng([config.seed, i]).uniform(lo, hi))
        s = synth_ecg(config.sampling_hz, config.duration_s, hr,
                      seed=[config.seed, i, 1])
        write_record_files(s, config.out_dir, name, gain=config.gain)
        if config.write_csv:
            with open(os.path.join(config.out_dir, name + ".csv"), "w",
                      encoding="ascii") as fh:
                fh.write(write_csv(s))
        entries.append({"name": name, "heart_rate_bpm": hr,
                        "seed": [config.seed, i, 1]})
        log.debug("%s: generated at %.1f bpm", name, hr)
    _write_json(os.path.join(config.out_dir, "corpus_manifest.json"), {
        "schema_version": 1,
        "count": config.count,
        "duration_s": config.duration_s,
        "sampling_hz": config.sampling_hz,
        "gain": config.gain,
        "master_seed": config.seed,
        "records": entries,
    })
    log.info("gen-corpus: wrote %d records to %s", config.count,
             config.out_dir)
    return EXIT_OK


def _render_one(task: tuple) -> dict:
    hea_path, out_dir, layout_d, degrade_d, seed = task
    name = os.path.splitext(os.path.basename(hea_path))[0]
    try:
        s = read_record_files(hea_path)
        layout = PaperLayout.from_dict(layout_d)
        degrade = DegradationSpec.from_dict(degrade_d)
        image = render(s, layout, degrade, seed=seed)
        save_png(image, os.path.join(out_dir, name + ".png"))
        return {"record": name, "status": "ok", "png": name + ".png",
                "seed": seed}
    except Exception as exc:
        return {"record": name, "status": "error", "error": str(exc)}


def cmd_render(config: RenderConfig) -> int:
    """Render every record in in_dir to a PNG page."""
    heas = _discover(config.in_dir, "*.hea")
    os.makedirs(config.out_dir, exist_ok=True)
    layout = PaperLayout(dpi=config.dpi)
    degrade = DegradationSpec(
        gaussian_noise_sigma=config.noise_sigma,
        rotation_deg=config.rotation_deg,
        trace_thickness_px=config.trace_thickness_px,
        grid_intensity=config.grid_intensity,
        trace_intensity=config.trace_intensity)
    tasks = [(hea, config.out_dir, layout.to_dict(), degrade.to_dict(),
              [config.seed, i])
             for i, hea in enumerate(heas)]
    rows = _run_batch(tasks, _render_one, config.workers)
    failures = _log_rows(rows)
    _write_json(os.path.join(config.out_dir, "render_manifest.json"), {
        "schema_version": 1,
        "layout": layout.to_dict(),
        "degradation": degrade.to_dict(),
        "master_seed": config.seed,
        "records": rows,
    })
    log.info("render: %d ok, %d failed", len(rows) - failures, failures)
    return EXIT_PARTIAL if failures else EXIT_OK


def _digitize_one(task: tuple) -> dict:
    png_path, out_dir, detector, target_fs, px_per_mm, gain = task
    name = os.path.splitext(os.path.basename(png_path))[0]
    try:
        arr, dpi = load_image(png_path)
        if arr.ndim == 3:
            image = to_grayscale(arr, dpi=dpi)
        else:
            image = RasterImage(pixels=arr, dpi=dpi)
        try:
            record, report = digitize(image, detector=detector,
                                      target_fs=target_fs,
                                      px_per_mm_override=px_per_mm)
        except DigitizationError as exc:
            partial = exc.report.to_json_dict() if exc.report else {}
            partial["error"] = str(exc)
            _write_json(os.path.join(out_dir, name + ".report.json"), partial)
            return {"record": name, "status": "error", "error": str(exc),
                    "stage": exc.stage}
        write_record_files(record, out_dir, name, gain=gain)
        _write_json(os.path.join(out_dir, name + ".report.json"),
                    report.to_json_dict())
        return {"record": name, "status": "ok",
                "calibration_source": report.calibration_source,
                "px_per_mm": report.px_per_mm,
                "grid_removal_iterations": report.grid_removal_iterations,
                "grid_residual": report.grid_residual,
                "n_panels": len(report.panels),
                "n_warnings": len(report.warnings)}
    except Exception as exc:
        return {"record": name, "status": "error", "error": str(exc)}


def cmd_digitize(config: DigitizeConfig) -> int:
    """Digitize every PNG in in_dir to a record plus a pipeline report."""
    get_detector(config.detector)
    pngs = _discover(config.in_dir, "*.png")
    os.makedirs(config.out_dir, exist_ok=True)
    tasks = [(png, config.out_dir, config.detector, config.target_fs,
              config.px_per_mm, config.gain) for png in pngs]
    rows = _run_batch(tasks, _digitize_one, config.workers)
    failures = _log_rows(rows)
    _write_csv_rows(os.path.join(config.out_dir, "digitize_summary.csv"),
                    ["record", "status", "calibration_source", "px_per_mm",
                     "grid_removal_iterations", "grid_residual", "n_panels",
                     "n_warnings", "stage", "error"], rows)
    log.info("digitize: %d ok, %d failed", len(rows) - failures, failures)
    return EXIT_PARTIAL if failures else EXIT_OK


def _evaluate_one(task: tuple) -> dict:
    ref_hea, est_dir, out_dir, max_lag_s, beta, use_coverage = task
    name = os.path.splitext(os.path.basename(ref_hea))[0]
    try:
        est_hea = os.path.join(est_dir, name + ".hea")
        if not os.path.exists(est_hea):
            return {"record": name, "status": "error",
                    "error": f"no digitized record {name}.hea in {est_dir}"}
        ref = read_record_files(ref_hea)
        est = read_record_files(est_hea)
        coverage = None
        report_path = os.path.join(est_dir, name + ".report.json")
        if use_coverage and os.path.exists(report_path):
            with open(report_path, "r", encoding="utf-8") as fh:
                digi = DigitizationReport.from_json_dict(json.load(fh))
            coverage = digi.coverage or None
        rep = metrics_mod.report(ref, est, coverage,
                                 max_lag_s=max_lag_s, beta=beta)
        _write_json(os.path.join(out_dir, name + ".metrics.json"),
                    rep.to_json_dict())
        return {"record": name, "status": "ok",
                "snr_mean_db": rep.snr_mean_db,
                "snr_median_db": rep.snr_median_db,
                "n_infinite_snr": rep.n_infinite_snr,
                "ks_mean": rep.ks_mean, "wad_mean": rep.wad_mean,
                "asci_mean": rep.asci_mean, "n_leads": len(rep.leads),
                "n_warnings": len(rep.warnings)}
    except Exception as exc:
        return {"record": name, "status": "error", "error": str(exc)}


def _aggregate_rows(rows: list[dict]) -> dict:
    """Cross-record aggregates over the per-record mean columns."""
    ok = [r for r in rows if r.get("status") == "ok"]
    summary = {
        "schema_version": 1,
        "metric_definitions": metrics_mod.METRIC_DEFINITIONS,
        "n_records": len(rows),
        "n_failed": len(rows) - len(ok),
    }
    # A record whose every lead hit infinite SNR has mean None; represent
    # it as +inf for cross-record aggregation.
    snr_means = [math.inf if r["snr_mean_db"] is None else r["snr_mean_db"]
                 for r in ok]
    if snr_means:
        mean, n_pos, n_neg = metrics_mod._snr_mean(snr_means)
        summary["snr_mean_db"] = metrics_mod._inf_to_json(mean)
        summary["n_infinite_record_means"] = n_pos + n_neg
        try:
            median = metrics_mod._snr_median(snr_means)
        except PaperEcgError:
            median = None
        summary["snr_median_db"] = metrics_mod._inf_to_json(median)
        for key in ("ks_mean", "wad_mean", "asci_mean"):
            vals = [r[key] for r in ok if r.get(key) is not None]
            summary[key] = float(np.mean(vals)) if vals else None
    return summary


def cmd_evaluate(config: EvaluateConfig) -> int:
    """Score every digitized record in est_dir against its reference."""
    ref_heas = _discover(config.ref_dir, "*.hea")
    os.makedirs(config.out_dir, exist_ok=True)
    tasks = [(hea, config.est_dir, config.out_dir, config.max_lag_s,
              config.asci_beta, config.use_coverage) for hea in ref_heas]
    rows = _run_batch(tasks, _evaluate_one, config.workers)
    failures = _log_rows(rows)
    _write_csv_rows(os.path.join(config.out_dir, "evaluate_summary.csv"),
                    ["record", "status", "snr_mean_db", "snr_median_db",
                     "n_infinite_snr", "ks_mean", "wad_mean", "asci_mean",
                     "n_leads", "n_warnings", "error"], rows)
    summary = _aggregate_rows(rows)
    _write_json(os.path.join(config.out_dir, "evaluate_summary.json"), summary)
    log.info("evaluate: %d ok, %d failed", len(rows) - failures, failures)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_roundtrip(config: RoundtripConfig) -> int:
    """Full synth -> render -> digitize -> evaluate experiment.

    Writes corpus/, renders/, digitized/, and metrics/ under out_dir by
    calling the same functions as the standalone subcommands, then prints
    and saves the aggregate table.
    """
    corpus = os.path.join(config.out_dir, "corpus")
    renders = os.path.join(config.out_dir, "renders")
    digitized = os.path.join(config.out_dir, "digitized")
    metrics_dir = os.path.join(config.out_dir, "metrics")
    codes = [cmd_gen_corpus(GenCorpusConfig(
        out_dir=corpus, count=config.count, duration_s=config.duration_s,
        sampling_hz=config.sampling_hz, heart_rate_bpm=config.heart_rate_bpm,
        gain=config.gain, write_csv=config.write_csv, seed=config.seed))]
    codes.append(cmd_render(RenderConfig(
        in_dir=corpus, out_dir=renders, dpi=config.dpi,
        noise_sigma=config.noise_sigma, rotation_deg=config.rotation_deg,
        trace_thickness_px=config.trace_thickness_px,
        grid_intensity=config.grid_intensity,
        trace_intensity=config.trace_intensity, seed=config.seed,
        workers=config.workers)))
    codes.append(cmd_digitize(DigitizeConfig(
        in_dir=renders, out_dir=digitized, detector=config.detector,
        target_fs=config.sampling_hz, gain=config.gain,
        workers=config.workers)))
    codes.append(cmd_evaluate(EvaluateConfig(
        ref_dir=corpus, est_dir=digitized, out_dir=metrics_dir,
        max_lag_s=config.max_lag_s, asci_beta=config.asci_beta,
        use_coverage=config.use_coverage, workers=config.workers)))
    with open(os.path.join(metrics_dir, "evaluate_summary.json"), "r",
              encoding="utf-8") as fh:
        summary = json.load(fh)
    _write_json(os.path.join(config.out_dir, "roundtrip_summary.json"),
                summary)
    print("records: {n_records} ({n_failed} failed)".format(**summary))
    for key in ("snr_mean_db", "snr_median_db", "ks_mean", "wad_mean",
                "asci_mean"):
        value = summary.get(key)
        if isinstance(value, float):
            value = f"{value:.4f}"
        print(f"{key}: {value}")
    return max(codes)


SUBCOMMANDS = {
    "gen-corpus": (GenCorpusConfig, cmd_gen_corpus,
                   "generate a seeded synthetic record corpus"),
    "render": (RenderConfig, cmd_render,
               "render records to calibrated paper PNG pages"),
    "digitize": (DigitizeConfig, cmd_digitize,
                 "digitize paper PNG pages back to records"),
    "evaluate": (EvaluateConfig, cmd_evaluate,
                 "score digitized records against their references"),
    "roundtrip": (RoundtripConfig, cmd_roundtrip,
                  "run gen-corpus, render, digitize, and evaluate end to end"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paperecg",
        description="Round-trip toolkit: render 12-lead records onto "
                    "calibrated paper images and digitize them back.")
    parser.add_argument("--config", default=None,
                        help="JSON config file for the chosen subcommand")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides the config value)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes, 0 = one per CPU "
                             "(overrides the config value)")
    parser.add_argument("--verbose", action="store_true",
                        help="log per-record details")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (cls, _, help_text) in SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        _add_config_flags(sub, cls)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    cls, command, _ = SUBCOMMANDS[args.command]
    try:
        config = resolve_config(cls, args)
        return command(config)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_FATAL
    except (PaperEcgError, OSError) as exc:
        log.error("fatal: %s", exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
