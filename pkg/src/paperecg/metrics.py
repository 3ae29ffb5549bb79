"""Fidelity metrics between a reference record and a digitized estimate.

SNR follows the usual power-ratio form. KS, WAD, and ASCI have no single
canonical definition in the digitization literature, so the forms used
here are fixed and version-tagged in every report (METRIC_DEFINITIONS):

- ks: sup-distance between the empirical amplitude CDFs of the two
  signals.
- wad: weighted mean absolute difference, weight 1 + |ref - median(ref)| /
  max|ref - median(ref)|, so high-deflection regions count roughly double.
- asci: mean of per-sample +/-1 indicators, +1 when |ref - est| is within
  beta * (reference dynamic range).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AggregationError, AlignmentError, ValidationError
from .wfdb_io import SignalSet

#: Bump when any metric formula changes; reports carry this tag so scores
#: from different code versions are never compared silently.
METRIC_DEFINITIONS = "paperecg-metrics-v1"

SCHEMA_VERSION = 1

DEFAULT_MAX_LAG_S = 0.5
DEFAULT_ASCI_BETA = 0.05
MIN_OVERLAP_S = 1.0


def align(ref: np.ndarray, est: np.ndarray, sampling_hz: float,
          max_lag_s: float = DEFAULT_MAX_LAG_S
          ) -> tuple[np.ndarray, np.ndarray, int]:
    """Find the integer lag of est against ref and return the overlap.

    Positive lag means est is delayed: est[lag:] lines up with ref[:-lag].
    The lag maximizing the cross-correlation over [-max_lag, +max_lag]
    samples wins; ties go to the smaller |lag|, then to the earlier lag.
    With max_lag_s = 0 the inputs pass through unshifted.

    Returns (ref_overlap, est_overlap, lag).

    Raises AlignmentError when the shifted overlap would be shorter than
    one second at sampling_hz.
    """
    r = np.asarray(ref, dtype=np.float64)
    e = np.asarray(est, dtype=np.float64)
    if r.ndim != 1 or e.ndim != 1:
        raise ValidationError("align expects 1-D signals")
    if max_lag_s < 0:
        raise ValidationError("max_lag_s must be >= 0")
    n = min(r.size, e.size)
    r = r[:n]
    e = e[:n]
    max_lag = int(round(max_lag_s * sampling_hz))
    if max_lag == 0:
        return r, e, 0
    min_overlap = int(math.ceil(MIN_OVERLAP_S * sampling_hz))
    best_lag = 0
    best_corr = -math.inf
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            seg_r, seg_e = r[:n - lag], e[lag:]
        else:
            seg_r, seg_e = r[-lag:], e[:n + lag]
        if seg_r.size < min_overlap:
            continue
        corr = float(np.dot(seg_r, seg_e))
        if corr > best_corr or (corr == best_corr
                                and (abs(lag), lag)
                                < (abs(best_lag), best_lag)):
            best_corr = corr
            best_lag = lag
    if best_corr == -math.inf:
        raise AlignmentError(
            f"no lag in [-{max_lag}, {max_lag}] leaves "
            f"{MIN_OVERLAP_S:g} s of overlap (n = {n})")
    lag = best_lag
    if lag >= 0:
        return r[:n - lag], e[lag:], lag
    return r[-lag:], e[:n + lag], lag


def snr_db(ref: np.ndarray, est: np.ndarray) -> float:
    """10 log10 of reference power over residual power, in dB.

    Zero residual power gives +inf; zero reference power against a
    nonzero residual gives -inf.
    """
    r = np.asarray(ref, dtype=np.float64)
    e = np.asarray(est, dtype=np.float64)
    if r.shape != e.shape or r.size < 1:
        raise ValidationError(
            f"snr_db needs equal nonempty signals, got {r.shape} vs {e.shape}")
    p_orig = float(np.mean(r * r))
    noise = r - e
    p_noise = float(np.mean(noise * noise))
    if p_noise == 0.0:
        return math.inf
    if p_orig == 0.0:
        return -math.inf
    return 10.0 * math.log10(p_orig / p_noise)


def _snr_mean(values: list[float]) -> tuple[float | None, int, int]:
    """Mean of the finite entries plus counts of +inf and -inf entries."""
    finite = [v for v in values if math.isfinite(v)]
    n_pos = sum(1 for v in values if v == math.inf)
    n_neg = sum(1 for v in values if v == -math.inf)
    mean = sum(finite) / len(finite) if finite else None
    return mean, n_pos, n_neg


def _snr_median(values: list[float]) -> float:
    """Median over the full list; infinities sort to the ends.

    An odd-length list may answer with an infinity (the central value).
    An even-length list needs both central values finite.
    """
    ordered = sorted(values)
    n = len(ordered)
    if n % 2 == 1:
        return ordered[n // 2]
    lo, hi = ordered[n // 2 - 1], ordered[n // 2]
    if math.isinf(lo) or math.isinf(hi):
        raise AggregationError(
            "even-count median undefined: a central value is infinite")
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SnrAggregates:
    mean_db: float | None
    median_db: float
    n_finite: int
    n_pos_inf: int
    n_neg_inf: int


def snr_aggregates(values: list[float]) -> SnrAggregates:
    """Mean and median over per-lead SNRs.

    Infinite entries are excluded from the mean and counted separately;
    the median runs over the full ordered list. Raises AggregationError
    when an even-count median lands on an infinite central value.
    """
    if not values:
        raise ValidationError("snr_aggregates needs at least one value")
    mean, n_pos, n_neg = _snr_mean(values)
    median = _snr_median(values)
    return SnrAggregates(mean_db=mean, median_db=median,
                         n_finite=len(values) - n_pos - n_neg,
                         n_pos_inf=n_pos, n_neg_inf=n_neg)


def ks_metric(ref: np.ndarray, est: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic over amplitude values."""
    r = np.sort(np.asarray(ref, dtype=np.float64).ravel())
    e = np.sort(np.asarray(est, dtype=np.float64).ravel())
    if r.size == 0 or e.size == 0:
        raise ValidationError("ks_metric needs non-empty signals")
    grid = np.concatenate([r, e])
    cdf_r = np.searchsorted(r, grid, side="right") / r.size
    cdf_e = np.searchsorted(e, grid, side="right") / e.size
    return float(np.max(np.abs(cdf_r - cdf_e)))


def wad(ref: np.ndarray, est: np.ndarray) -> float:
    """Weighted mean absolute difference, emphasizing large deflections.

    Weights are 1 + |ref - median(ref)| / max|ref - median(ref)|; a
    constant reference degenerates to uniform weights.
    """
    r = np.asarray(ref, dtype=np.float64)
    e = np.asarray(est, dtype=np.float64)
    if r.shape != e.shape or r.size < 1:
        raise ValidationError(
            f"wad needs equal nonempty signals, got {r.shape} vs {e.shape}")
    dev = np.abs(r - np.median(r))
    max_dev = float(np.max(dev))
    weights = 1.0 + dev / max_dev if max_dev > 0 else np.ones_like(r)
    return float(np.sum(weights * np.abs(r - e)) / np.sum(weights))


def asci(ref: np.ndarray, est: np.ndarray,
         beta: float = DEFAULT_ASCI_BETA) -> float:
    """Mean of +/-1 agreement indicators under an adaptive tolerance.

    A sample scores +1 when |ref - est| <= beta * (max(ref) - min(ref)),
    else -1. A constant reference makes the tolerance zero, so only exact
    matches score +1.
    """
    r = np.asarray(ref, dtype=np.float64)
    e = np.asarray(est, dtype=np.float64)
    if r.shape != e.shape or r.size < 1:
        raise ValidationError(
            f"asci needs equal nonempty signals, got {r.shape} vs {e.shape}")
    if not 0 < beta < 1:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    tau = beta * float(np.max(r) - np.min(r))
    agree = np.abs(r - e) <= tau
    return float(np.mean(np.where(agree, 1.0, -1.0)))


@dataclass(frozen=True)
class LeadMetrics:
    lead: str
    snr_db: float
    ks: float
    wad: float
    asci: float
    lag: int
    n_samples: int


@dataclass
class MetricsReport:
    """Per-lead scores plus aggregates, JSON-serializable.

    snr fields may be +/-inf; to_json_dict maps them to the strings
    "inf" / "-inf" so the output stays valid JSON.
    """

    schema_version: int = SCHEMA_VERSION
    metric_definitions: str = METRIC_DEFINITIONS
    sampling_hz: float = 0.0
    leads: list[LeadMetrics] = field(default_factory=list)
    snr_mean_db: float | None = None
    snr_median_db: float | None = None
    n_infinite_snr: int = 0
    ks_mean: float | None = None
    wad_mean: float | None = None
    asci_mean: float | None = None
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["leads"] = [{**entry, "snr_db": _inf_to_json(entry["snr_db"])}
                      for entry in d["leads"]]
        d["snr_mean_db"] = _inf_to_json(d["snr_mean_db"])
        d["snr_median_db"] = _inf_to_json(d["snr_median_db"])
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricsReport":
        known = {f.name for f in dataclasses.fields(cls)}
        d = {k: v for k, v in d.items() if k in known}
        d["leads"] = [LeadMetrics(**{**entry,
                                     "snr_db": _inf_from_json(entry["snr_db"])})
                      for entry in d.get("leads", [])]
        d["snr_mean_db"] = _inf_from_json(d.get("snr_mean_db"))
        d["snr_median_db"] = _inf_from_json(d.get("snr_median_db"))
        return cls(**d)


def _inf_to_json(value):
    if value == math.inf:
        return "inf"
    if value == -math.inf:
        return "-inf"
    return value


def _inf_from_json(value):
    if value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    return value


def _as_mask(coverage, n: int) -> np.ndarray:
    """Accept a boolean array or a list of [start, stop) intervals."""
    if isinstance(coverage, np.ndarray):
        mask = coverage.astype(bool)
        if mask.size < n:
            mask = np.concatenate([mask, np.zeros(n - mask.size, dtype=bool)])
        return mask[:n]
    mask = np.zeros(n, dtype=bool)
    for start, stop in coverage:
        mask[max(0, int(start)):min(n, int(stop))] = True
    return mask


def report(ref: SignalSet, est: SignalSet, coverage: dict | None = None, *,
           max_lag_s: float = DEFAULT_MAX_LAG_S,
           beta: float = DEFAULT_ASCI_BETA) -> MetricsReport:
    """Score est against ref lead by lead.

    Each common lead is lag-aligned, masked down to its observed samples
    (full coverage when no map is given), and scored with every metric.
    Leads absent from ref, leads with no observed samples, and leads whose
    alignment fails are skipped with a warning. Raises ValidationError
    when the sampling rates differ or no lead is shared.
    """
    if ref.sampling_hz != est.sampling_hz:
        raise ValidationError(
            f"sampling rates differ: {ref.sampling_hz} vs {est.sampling_hz}")
    rep = MetricsReport(sampling_hz=ref.sampling_hz)
    common = [name for name in est.lead_names if name in ref.lead_names]
    if not common:
        raise ValidationError("no common leads to score")
    for name in est.lead_names:
        if name not in ref.lead_names:
            rep.warnings.append(f"lead {name} missing from reference; skipped")
    snrs = []
    for name in common:
        r = ref.lead(name)
        e = est.lead(name)
        n = min(r.size, e.size)
        if r.size != e.size:
            rep.warnings.append(
                f"lead {name}: length mismatch ({r.size} vs {e.size}), "
                f"scored on the first {n} samples")
        mask = (np.ones(n, dtype=bool) if coverage is None or name not in coverage
                else _as_mask(coverage[name], n))
        try:
            r_seg, e_seg, lag = align(r[:n], e[:n], ref.sampling_hz, max_lag_s)
        except AlignmentError as exc:
            rep.warnings.append(f"lead {name}: {exc}")
            continue
        m_seg = mask[lag:] if lag >= 0 else mask[:n + lag]
        rr = r_seg[m_seg]
        ee = e_seg[m_seg]
        if rr.size == 0:
            rep.warnings.append(f"lead {name}: no observed samples; skipped")
            continue
        value = snr_db(rr, ee)
        snrs.append(value)
        rep.leads.append(LeadMetrics(
            lead=name, snr_db=value, ks=ks_metric(rr, ee), wad=wad(rr, ee),
            asci=asci(rr, ee, beta), lag=lag, n_samples=int(rr.size)))
    if snrs:
        mean, n_pos, n_neg = _snr_mean(snrs)
        rep.snr_mean_db = mean
        rep.n_infinite_snr = n_pos + n_neg
        try:
            rep.snr_median_db = _snr_median(snrs)
        except AggregationError as exc:
            rep.snr_median_db = None
            rep.warnings.append(str(exc))
        rep.ks_mean = float(np.mean([m.ks for m in rep.leads]))
        rep.wad_mean = float(np.mean([m.wad for m in rep.leads]))
        rep.asci_mean = float(np.mean([m.asci for m in rep.leads]))
    else:
        rep.warnings.append("no lead produced any scored samples")
    return rep
