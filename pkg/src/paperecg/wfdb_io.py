"""PTB-compatible record I/O (WFDB subset) and CSV interchange.

File conventions:

* Header text: the first non-comment line is
  ``<record_name> <n_signals> <sampling_hz> <n_samples>``, followed by one
  line per signal: ``<file_name> <format> <gain> <adc_zero> <lead_name>``.
  Lines starting with ``#`` and blank lines are ignored. Only format code
  16 is accepted.
* Signal data: 16-bit little-endian two's complement samples, channel
  interleaved frame by frame (frame = one sample of every signal).
* CSV: header ``time_s,<lead>,...`` then one row per sample. The sampling
  rate is inferred from the first two time stamps and the step must be
  uniform to 1e-6 relative.

Physical conversion is ``mV = (raw - adc_zero) / gain`` with gain in ADC
units per millivolt. PTB-style records use gain 2000 (0.5 uV per unit) and
cover +/-16.384 mV at 16 bits; values outside that span are reported as
warnings, not failures.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CsvFormatError,
    HeaderParseError,
    RangeError,
    TruncationError,
    UnsupportedFormatError,
    ValidationError,
)

STANDARD_LEADS = ("I", "II", "III", "aVR", "aVL", "aVF",
                  "V1", "V2", "V3", "V4", "V5", "V6")

#: Full-scale magnitude of a 16-bit record at gain 2000 (mV).
VOLTAGE_RANGE_MV = 16.384

SUPPORTED_FORMAT = 16


@dataclass(frozen=True)
class LeadSpec:
    """One signal line of a record header."""

    file_name: str
    format_code: int
    gain: float
    adc_zero: int
    lead_name: str

    def __post_init__(self):
        if self.format_code != SUPPORTED_FORMAT:
            raise UnsupportedFormatError(
                f"format {self.format_code} not supported; only {SUPPORTED_FORMAT}")
        if not self.gain > 0:
            raise ValidationError(f"gain must be positive, got {self.gain}")
        if self.lead_name not in STANDARD_LEADS:
            raise ValidationError(f"unknown lead name {self.lead_name!r}")


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_hz: float
    n_samples: int
    leads: tuple[LeadSpec, ...]

    def __post_init__(self):
        if not 1 <= self.n_signals <= 12:
            raise ValidationError(
                f"n_signals must be in [1, 12], got {self.n_signals}")
        if len(self.leads) != self.n_signals:
            raise ValidationError(
                f"header declares {self.n_signals} signals but has "
                f"{len(self.leads)} lead lines")
        if not self.sampling_hz > 0:
            raise ValidationError("sampling_hz must be positive")
        if not self.n_samples > 0:
            raise ValidationError("n_samples must be positive")
        names = [l.lead_name for l in self.leads]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate lead names in header: {names}")


@dataclass(frozen=True, eq=False)
class SignalSet:
    """A multi-lead record in physical units (millivolts).

    samples has shape (n_leads, n_samples), float64, one row per entry of
    lead_names. meta carries non-essential annotations such as range
    warnings collected while reading.
    """

    sampling_hz: float
    lead_names: tuple[str, ...]
    samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError("samples must be 2-D (n_leads, n_samples)")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "lead_names", tuple(self.lead_names))
        if arr.shape[0] != len(self.lead_names):
            raise ValidationError(
                f"{len(self.lead_names)} lead names but {arr.shape[0]} rows")
        if len(set(self.lead_names)) != len(self.lead_names):
            raise ValidationError(f"duplicate lead names: {self.lead_names}")
        if not self.sampling_hz > 0:
            raise ValidationError("sampling_hz must be positive")

    @property
    def n_leads(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_hz

    def lead(self, name: str) -> np.ndarray:
        try:
            return self.samples[self.lead_names.index(name)]
        except ValueError:
            raise KeyError(f"no lead {name!r} in record") from None


def parse_header(text: str) -> RecordHeader:
    """Parse header text into a RecordHeader.

    Raises HeaderParseError (with the 1-based line number), or
    UnsupportedFormatError / ValidationError for well-formed lines with bad
    content.
    """
    record_line = None
    record_lineno = 0
    leads: list[LeadSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if record_line is None:
            if len(fields) != 4:
                raise HeaderParseError(
                    f"line {lineno}: record line needs 4 fields, got {len(fields)}")
            record_line = fields
            record_lineno = lineno
            continue
        if len(fields) != 5:
            raise HeaderParseError(
                f"line {lineno}: signal line needs 5 fields, got {len(fields)}")
        try:
            spec = LeadSpec(file_name=fields[0],
                            format_code=int(fields[1]),
                            gain=float(fields[2]),
                            adc_zero=int(fields[3]),
                            lead_name=fields[4])
        except (UnsupportedFormatError, ValidationError):
            raise
        except ValueError as exc:
            raise HeaderParseError(f"line {lineno}: {exc}") from None
        leads.append(spec)
    if record_line is None:
        raise HeaderParseError("line 1: empty header, no record line")
    try:
        name = record_line[0]
        n_signals = int(record_line[1])
        sampling_hz = float(record_line[2])
        n_samples = int(record_line[3])
    except ValueError as exc:
        raise HeaderParseError(f"line {record_lineno}: {exc}") from None
    return RecordHeader(record_name=name, n_signals=n_signals,
                        sampling_hz=sampling_hz, n_samples=n_samples,
                        leads=tuple(leads))


def render_header(header: RecordHeader) -> str:
    """Format a RecordHeader back to header text (parse round-trips)."""
    fs = header.sampling_hz
    fs_text = repr(int(fs)) if float(fs).is_integer() else repr(float(fs))
    lines = [f"{header.record_name} {header.n_signals} {fs_text} {header.n_samples}"]
    for spec in header.leads:
        gain = spec.gain
        gain_text = repr(int(gain)) if float(gain).is_integer() else repr(float(gain))
        lines.append(f"{spec.file_name} {spec.format_code} {gain_text} "
                     f"{spec.adc_zero} {spec.lead_name}")
    return "\n".join(lines) + "\n"


def read_signals(header: RecordHeader, data: bytes) -> SignalSet:
    """Decode interleaved 16-bit samples to millivolts.

    The byte count must match n_signals * n_samples * 2 exactly
    (TruncationError otherwise). Converted magnitudes above
    VOLTAGE_RANGE_MV are recorded as warnings in the result's meta.
    """
    expected = header.n_signals * header.n_samples * 2
    if len(data) != expected:
        raise TruncationError(
            f"expected {expected} bytes for {header.n_signals} signals x "
            f"{header.n_samples} samples, got {len(data)}")
    raw = np.frombuffer(data, dtype="<i2").astype(np.int64)
    frames = raw.reshape(header.n_samples, header.n_signals).T
    gains = np.array([l.gain for l in header.leads], dtype=np.float64)
    zeros = np.array([l.adc_zero for l in header.leads], dtype=np.float64)
    mv = (frames - zeros[:, None]) / gains[:, None]
    warnings = []
    for i, spec in enumerate(header.leads):
        peak = float(np.max(np.abs(mv[i]))) if mv.shape[1] else 0.0
        if peak > VOLTAGE_RANGE_MV:
            warnings.append(
                f"lead {spec.lead_name}: |{peak:.3f}| mV exceeds "
                f"{VOLTAGE_RANGE_MV} mV range")
    meta = {"range_warnings": warnings} if warnings else {}
    return SignalSet(sampling_hz=header.sampling_hz,
                     lead_names=tuple(l.lead_name for l in header.leads),
                     samples=mv, meta=meta)


def write_record(s: SignalSet, gain: float = 2000.0, record_name: str = "record",
                 adc_zero: int = 0, file_name: str | None = None
                 ) -> tuple[str, bytes]:
    """Quantize a SignalSet to a (header_text, data_bytes) pair.

    raw = round(mV * gain) + adc_zero. A sample that does not fit int16
    raises RangeError naming the lead and sample index.
    """
    if not gain > 0:
        raise ValidationError(f"gain must be positive, got {gain}")
    if file_name is None:
        file_name = record_name + ".dat"
    raw = np.rint(s.samples * gain).astype(np.int64) + int(adc_zero)
    bad = (raw < -32768) | (raw > 32767)
    if bad.any():
        li, si = np.argwhere(bad)[0]
        raise RangeError(
            f"lead {s.lead_names[li]} sample {si}: raw value {raw[li, si]} "
            f"outside int16 range at gain {gain}")
    leads = tuple(LeadSpec(file_name=file_name, format_code=SUPPORTED_FORMAT,
                           gain=gain, adc_zero=adc_zero, lead_name=name)
                  for name in s.lead_names)
    header = RecordHeader(record_name=record_name, n_signals=s.n_leads,
                          sampling_hz=s.sampling_hz, n_samples=s.n_samples,
                          leads=leads)
    data = raw.T.astype("<i2").tobytes()
    return render_header(header), data


def write_csv(s: SignalSet) -> str:
    """Serialize to CSV with full float precision (round-trips losslessly)."""
    lines = ["time_s," + ",".join(s.lead_names)]
    fs = s.sampling_hz
    for i in range(s.n_samples):
        t = i / fs
        row = ",".join(repr(float(v)) for v in s.samples[:, i])
        lines.append(f"{t!r},{row}")
    return "\n".join(lines) + "\n"


def read_csv(text: str) -> SignalSet:
    """Parse CSV interchange text back to a SignalSet.

    The sampling rate comes from the first two time stamps; a step that
    drifts more than 1e-6 relative, a missing body, or a short row raises
    CsvFormatError.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CsvFormatError("empty CSV text")
    header_fields = [f.strip() for f in lines[0].split(",")]
    if len(header_fields) < 2 or header_fields[0] != "time_s":
        raise CsvFormatError(
            f"CSV header must be 'time_s,<lead>,...', got {lines[0]!r}")
    lead_names = tuple(header_fields[1:])
    body = lines[1:]
    if len(body) < 2:
        raise CsvFormatError("CSV needs at least 2 sample rows to infer rate")
    times = np.empty(len(body))
    values = np.empty((len(lead_names), len(body)))
    for i, row in enumerate(body):
        fields = row.split(",")
        if len(fields) != len(lead_names) + 1:
            raise CsvFormatError(
                f"row {i + 2}: expected {len(lead_names) + 1} fields, "
                f"got {len(fields)}")
        try:
            times[i] = float(fields[0])
            values[:, i] = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise CsvFormatError(f"row {i + 2}: {exc}") from None
    dt = times[1] - times[0]
    if not dt > 0:
        raise CsvFormatError("time stamps must be strictly increasing")
    steps = np.diff(times)
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise CsvFormatError("non-uniform sampling step in CSV")
    fs = 1.0 / dt
    # Undo float artifacts of the textual time column (0.001 is not exact
    # in binary, so 1/dt lands a hair off the integer rate).
    if abs(fs - round(fs)) < 1e-6 * fs:
        fs = float(round(fs))
    return SignalSet(sampling_hz=fs, lead_names=lead_names, samples=values)


def write_record_files(s: SignalSet, out_dir: str, record_name: str,
                       gain: float = 2000.0, adc_zero: int = 0) -> tuple[str, str]:
    """Write <record_name>.hea and .dat under out_dir; returns the paths."""
    header_text, data = write_record(s, gain=gain, record_name=record_name,
                                     adc_zero=adc_zero,
                                     file_name=record_name + ".dat")
    hea_path = os.path.join(out_dir, record_name + ".hea")
    dat_path = os.path.join(out_dir, record_name + ".dat")
    with open(hea_path, "w", encoding="ascii") as fh:
        fh.write(header_text)
    with open(dat_path, "wb") as fh:
        fh.write(data)
    return hea_path, dat_path


def read_record_files(hea_path: str) -> SignalSet:
    """Read a .hea/.dat pair starting from the header path."""
    with open(hea_path, "r", encoding="ascii") as fh:
        header = parse_header(fh.read())
    file_names = {l.file_name for l in header.leads}
    if len(file_names) != 1:
        raise ValidationError(
            f"all signals must share one data file, got {sorted(file_names)}")
    dat_path = os.path.join(os.path.dirname(hea_path), header.leads[0].file_name)
    with open(dat_path, "rb") as fh:
        data = fh.read()
    return read_signals(header, data)
