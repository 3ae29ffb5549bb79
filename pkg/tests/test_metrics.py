import json
import math

import numpy as np
import pytest

from paperecg.errors import AggregationError, AlignmentError, ValidationError
from paperecg.metrics import (
    MetricsReport,
    align,
    asci,
    ks_metric,
    report,
    snr_aggregates,
    snr_db,
    wad,
)
from paperecg.wfdb_io import SignalSet


class TestSnr:
    def test_exact_match_is_positive_infinity(self):
        x = np.array([1.0, -2.0, 3.0])
        assert snr_db(x, x) == math.inf

    def test_zero_estimate_is_zero_db(self):
        x = np.array([1.0, -2.0, 3.0, 0.5])
        assert snr_db(x, np.zeros_like(x)) == 0.0

    def test_ten_percent_error_is_twenty_db(self):
        ref = np.array([1.0, 0.0, -1.0, 0.0])
        est = np.array([0.9, 0.0, -0.9, 0.0])
        assert snr_db(ref, est) == pytest.approx(20.0, abs=1e-9)

    def test_zero_reference_nonzero_error_is_negative_infinity(self):
        assert snr_db(np.zeros(4), np.ones(4)) == -math.inf

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            snr_db(np.zeros(4), np.zeros(5))


class TestAggregates:
    def test_mean_excludes_infinities(self):
        agg = snr_aggregates([10.0, 20.0, math.inf])
        assert agg.mean_db == pytest.approx(15.0)
        assert agg.median_db == 20.0
        assert agg.n_finite == 2
        assert agg.n_pos_inf == 1 and agg.n_neg_inf == 0

    def test_odd_median_may_be_infinite(self):
        agg = snr_aggregates([math.inf, math.inf, 5.0])
        assert agg.median_db == math.inf
        assert agg.mean_db == pytest.approx(5.0)

    def test_even_median_on_infinite_center_raises(self):
        with pytest.raises(AggregationError):
            snr_aggregates([0.0, math.inf])

    def test_all_infinite_mean_is_none(self):
        agg = snr_aggregates([math.inf, -math.inf, math.inf])
        assert agg.mean_db is None
        assert agg.median_db == math.inf

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            snr_aggregates([])


class TestKs:
    def test_identical_distributions(self):
        x = np.array([3.0, 1.0, 2.0])
        assert ks_metric(x, x[::-1]) == 0.0

    def test_single_displaced_value(self):
        assert ks_metric(np.array([1.0, 2.0, 3.0, 4.0]),
                         np.array([1.0, 2.0, 3.0, 100.0])) == 0.25

    def test_disjoint_supports(self):
        assert ks_metric(np.zeros(5), np.ones(5)) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            ks_metric(np.array([]), np.ones(3))


class TestWad:
    def test_weighted_value(self):
        # weights [1, 2, 1] against uniform 0.5 errors
        ref = np.array([0.0, 1.0, 0.0])
        est = np.array([0.5, 1.5, 0.5])
        assert wad(ref, est) == pytest.approx(0.5)

    def test_constant_reference_uses_uniform_weights(self):
        ref = np.full(4, 2.0)
        est = np.array([2.0, 3.0, 2.0, 3.0])
        assert wad(ref, est) == pytest.approx(0.5)

    def test_identical_is_zero(self):
        x = np.array([0.3, -0.7, 1.1])
        assert wad(x, x) == 0.0


class TestAsci:
    def test_tolerance_splits_samples(self):
        # tau = 0.1 * 10: first sample agrees, second does not
        ref = np.array([0.0, 10.0])
        est = np.array([0.5, 12.0])
        assert asci(ref, est, beta=0.1) == pytest.approx(0.0)

    def test_identical_is_one(self):
        x = np.array([0.0, 1.0, -1.0])
        assert asci(x, x) == 1.0

    def test_all_disagree_is_minus_one(self):
        ref = np.array([0.0, 1.0])
        assert asci(ref, ref + 10.0) == -1.0

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.2])
    def test_beta_range(self, beta):
        with pytest.raises(ValidationError):
            asci(np.array([0.0, 1.0]), np.array([0.0, 1.0]), beta=beta)


class TestAlign:
    @pytest.mark.parametrize("true_lag", [-7, -1, 0, 3, 12])
    def test_recovers_planted_lag(self, true_lag):
        rng = np.random.default_rng(5)
        base = rng.normal(size=700)
        ref = base[:600]
        if true_lag >= 0:
            est = np.concatenate([np.zeros(true_lag), base[:600 - true_lag]])
        else:
            est = np.concatenate([base[-true_lag:600 - true_lag],
                                  np.zeros(0)])[:600]
        r_seg, e_seg, lag = align(ref, est, 500.0, max_lag_s=0.05)
        assert lag == true_lag
        assert np.array_equal(r_seg, e_seg)

    def test_tie_prefers_smaller_magnitude(self):
        # all-zero signals tie every lag at zero correlation
        z = np.zeros(12)
        _, _, lag = align(z, z, 4.0, max_lag_s=0.5)
        assert lag == 0

    def test_tie_prefers_earlier_lag(self):
        # alternating combs correlate equally at −1 and +1, zero at 0
        ref = np.array([1.0, 0.0] * 4 + [1.0])
        est = np.array([0.0, 1.0] * 4 + [0.0])
        _, _, lag = align(ref, est, 8.0, max_lag_s=0.125)
        assert lag == -1

    def test_zero_max_lag_passes_through(self):
        ref = np.arange(8.0)
        est = np.arange(8.0)[::-1].copy()
        r_seg, e_seg, lag = align(ref, est, 4.0, max_lag_s=0.0)
        assert lag == 0
        assert np.array_equal(r_seg, ref)
        assert np.array_equal(e_seg, est)

    def test_short_overlap_raises(self):
        with pytest.raises(AlignmentError):
            align(np.ones(400), np.ones(400), 500.0, max_lag_s=0.01)

    def test_negative_max_lag_rejected(self):
        with pytest.raises(ValidationError):
            align(np.ones(8), np.ones(8), 4.0, max_lag_s=-1.0)


def _pair(ref_rows: np.ndarray, est_rows: np.ndarray, fs: float = 500.0,
          leads: tuple = ("I", "II")) -> tuple[SignalSet, SignalSet]:
    return (SignalSet(sampling_hz=fs, lead_names=leads, samples=ref_rows),
            SignalSet(sampling_hz=fs, lead_names=leads, samples=est_rows))


class TestReport:
    def test_sampling_rate_mismatch(self):
        ref, est = _pair(np.zeros((2, 600)), np.zeros((2, 600)))
        est = SignalSet(sampling_hz=250.0, lead_names=est.lead_names,
                        samples=est.samples)
        with pytest.raises(ValidationError, match="sampling rates"):
            report(ref, est)

    def test_no_common_leads(self):
        ref = SignalSet(sampling_hz=500.0, lead_names=("I",),
                        samples=np.zeros((1, 600)))
        est = SignalSet(sampling_hz=500.0, lead_names=("V1",),
                        samples=np.zeros((1, 600)))
        with pytest.raises(ValidationError, match="common"):
            report(ref, est)

    def test_perfect_match_scores(self):
        rng = np.random.default_rng(3)
        rows = rng.normal(size=(2, 800))
        ref, est = _pair(rows, rows.copy())
        rep = report(ref, est)
        assert all(m.snr_db == math.inf for m in rep.leads)
        assert all(m.ks == 0.0 and m.wad == 0.0 and m.asci == 1.0
                   for m in rep.leads)
        assert rep.snr_mean_db is None
        assert rep.n_infinite_snr == 2

    def test_coverage_mask_excludes_corruption(self):
        rng = np.random.default_rng(4)
        rows = rng.normal(size=(2, 1000))
        est_rows = rows.copy()
        est_rows[:, 800:] = 99.0
        ref, est = _pair(rows, est_rows)
        mask = np.zeros(1000, dtype=bool)
        mask[:800] = True
        rep = report(ref, est, coverage={"I": mask, "II": mask},
                     max_lag_s=0.0)
        assert all(m.snr_db == math.inf for m in rep.leads)
        assert all(m.n_samples == 800 for m in rep.leads)

    def test_coverage_as_interval_lists(self):
        rng = np.random.default_rng(6)
        rows = rng.normal(size=(1, 1000))
        est_rows = rows.copy()
        est_rows[0, :200] = -5.0
        ref = SignalSet(sampling_hz=500.0, lead_names=("II",), samples=rows)
        est = SignalSet(sampling_hz=500.0, lead_names=("II",),
                        samples=est_rows)
        rep = report(ref, est, coverage={"II": [[200, 1000]]}, max_lag_s=0.0)
        assert rep.leads[0].snr_db == math.inf
        assert rep.leads[0].n_samples == 800

    def test_extra_estimate_lead_warns(self):
        ref = SignalSet(sampling_hz=500.0, lead_names=("I",),
                        samples=np.ones((1, 600)))
        est = SignalSet(sampling_hz=500.0, lead_names=("I", "V9"),
                        samples=np.ones((2, 600)))
        rep = report(est=est, ref=ref)
        assert any("V9" in w for w in rep.warnings)
        assert [m.lead for m in rep.leads] == ["I"]

    def test_unobserved_lead_skipped_with_warning(self):
        rows = np.random.default_rng(7).normal(size=(2, 600))
        ref, est = _pair(rows, rows.copy())
        rep = report(ref, est,
                     coverage={"I": np.zeros(600, dtype=bool)},
                     max_lag_s=0.0)
        assert [m.lead for m in rep.leads] == ["II"]
        assert any("no observed samples" in w for w in rep.warnings)

    def test_length_mismatch_scores_common_prefix(self):
        rng = np.random.default_rng(8)
        base = rng.normal(size=700)
        ref = SignalSet(sampling_hz=500.0, lead_names=("I",),
                        samples=base[np.newaxis, :])
        est = SignalSet(sampling_hz=500.0, lead_names=("I",),
                        samples=base[np.newaxis, :650].copy())
        rep = report(ref, est, max_lag_s=0.0)
        assert rep.leads[0].snr_db == math.inf
        assert rep.leads[0].n_samples == 650
        assert any("length mismatch" in w for w in rep.warnings)

    def test_json_round_trip_with_infinities(self):
        rows = np.random.default_rng(9).normal(size=(2, 600))
        ref, est = _pair(rows, rows.copy())
        rep = report(ref, est)
        encoded = json.dumps(rep.to_json_dict())
        assert '"inf"' in encoded
        back = MetricsReport.from_json_dict(json.loads(encoded))
        assert back.to_json_dict() == rep.to_json_dict()
        assert back.leads[0].snr_db == math.inf

    def test_from_json_ignores_unknown_keys(self):
        rep = MetricsReport(sampling_hz=500.0)
        d = rep.to_json_dict()
        d["future_field"] = {"x": 1}
        assert MetricsReport.from_json_dict(d).to_json_dict() \
            == rep.to_json_dict()


def test_metric_ranges_and_fixed_points():
    rng = np.random.default_rng(101)
    for _ in range(200):
        n = int(rng.integers(2, 120))
        ref = rng.normal(scale=rng.uniform(0.1, 3.0), size=n)
        est = ref + rng.normal(scale=rng.uniform(0.0, 2.0), size=n)
        assert 0.0 <= ks_metric(ref, est) <= 1.0
        assert wad(ref, est) >= 0.0
        assert -1.0 <= asci(ref, est) <= 1.0
    x = rng.normal(size=64)
    assert snr_db(x, x) == math.inf
    assert ks_metric(x, x) == 0.0
    assert wad(x, x) == 0.0
    assert asci(x, x) == 1.0
