"""Exception types shared across the toolkit."""


class PaperEcgError(Exception):
    """Base class for all toolkit errors."""


class HeaderParseError(PaperEcgError):
    """Malformed record header text."""


class UnsupportedFormatError(PaperEcgError):
    """Signal format code other than 16."""


class ValidationError(PaperEcgError):
    """A value or structure violates a documented constraint."""


class RangeError(PaperEcgError):
    """A sample does not fit the 16-bit output range."""


class TruncationError(PaperEcgError):
    """Signal byte stream shorter or longer than the header promises."""


class CsvFormatError(PaperEcgError):
    """Malformed CSV interchange text."""


class DegenerateHistogramError(PaperEcgError):
    """Histogram with fewer than two occupied bins; no threshold exists."""


class NoSignalError(PaperEcgError):
    """No ink where signal content is required."""


class ReconstructionError(PaperEcgError):
    """Panel geometry too small or inconsistent to reconstruct."""


class AssemblyError(PaperEcgError):
    """Panel set incomplete or inconsistent during record assembly."""


class AlignmentError(PaperEcgError):
    """Lag search left less than the minimum scoring overlap."""


class AggregationError(PaperEcgError):
    """Aggregate statistic undefined for the given value list."""


class ConfigError(PaperEcgError):
    """Bad run configuration (unknown key, unusable value, missing input)."""


class DigitizationError(PaperEcgError):
    """A pipeline stage failed; carries the stage name and a partial report."""

    def __init__(self, stage: str, message: str, report=None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.report = report
