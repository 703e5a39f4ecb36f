import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from mixnoise import ConfigurationError, ShapeError
from mixnoise.evalstats import (
    TrialReport,
    accuracy,
    aggregate,
    format_accuracy_pct,
    format_mean_std_pct,
    format_pvalue,
    mean_std,
    regularized_incomplete_beta,
    student_t_two_sided_p,
    ttest_independent,
    write_summary_csv,
    write_ttest_csv,
)


class TestAccuracy:
    def test_two_thirds(self):
        assert accuracy([1, 2, 1], [1, 2, 2]) == pytest.approx(2 / 3)

    def test_identical(self):
        assert accuracy([3, 1, 4], [3, 1, 4]) == 1.0

    def test_disjoint(self):
        assert accuracy([0, 0], [1, 1]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            accuracy([1, 2], [1, 2, 3])
        with pytest.raises(ShapeError):
            accuracy([], [])


class TestIncompleteBeta:
    def test_against_scipy_grid(self):
        # absolute accuracy target 1e-8
        for a in (0.5, 1.0, 2.0, 5.5, 20.0):
            for b in (0.5, 1.5, 4.0, 9.0):
                for x in (0.0, 1e-6, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0 - 1e-6, 1.0):
                    mine = regularized_incomplete_beta(a, b, x)
                    ref = float(scipy.special.betainc(a, b, x))
                    assert abs(mine - ref) < 1e-8

    def test_invalid_shape_parameters(self):
        with pytest.raises(ConfigurationError):
            regularized_incomplete_beta(0.0, 1.0, 0.5)


class TestTTest:
    def test_reference_oracle_values(self):
        # frozen from an independent statistical-software run
        r = ttest_independent([1, 2, 3], [4, 5, 6])
        assert r.t == pytest.approx(-3.6742346141747673, abs=1e-9)
        assert r.df == 4.0
        assert r.p == pytest.approx(0.021311641128756727, abs=1e-9)
        assert not r.degenerate

    def test_identical_samples(self):
        r = ttest_independent([2.0, 2.0, 2.0], [2.0, 2.0, 2.0])
        assert r.t == 0.0
        assert r.p == 1.0
        assert r.degenerate

    def test_zero_variance_unequal_means(self):
        r = ttest_independent([1.0, 1.0], [2.0, 2.0])
        assert r.p == 0.0
        assert r.degenerate
        assert r.t < 0 and math.isinf(r.t)

    def test_short_samples_rejected(self):
        with pytest.raises(ConfigurationError):
            ttest_independent([1.0], [1.0, 2.0])

    def test_matches_scipy_student(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a = rng.standard_normal(int(rng.integers(2, 12)))
            b = rng.standard_normal(int(rng.integers(2, 12))) + rng.uniform(-1, 1)
            mine = ttest_independent(a, b)
            ref_t, ref_p = scipy.stats.ttest_ind(a, b)
            assert mine.t == pytest.approx(float(ref_t), abs=1e-10)
            assert mine.p == pytest.approx(float(ref_p), abs=1e-8)

    def test_matches_scipy_welch(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = rng.standard_normal(int(rng.integers(3, 10))) * rng.uniform(0.5, 3)
            b = rng.standard_normal(int(rng.integers(3, 10)))
            mine = ttest_independent(a, b, welch=True)
            ref_t, ref_p = scipy.stats.ttest_ind(a, b, equal_var=False)
            assert mine.t == pytest.approx(float(ref_t), abs=1e-10)
            assert mine.p == pytest.approx(float(ref_p), abs=1e-8)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_antisymmetric_t_symmetric_p(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(5)
        b = rng.standard_normal(6) + 0.5
        fwd = ttest_independent(a, b)
        rev = ttest_independent(b, a)
        assert fwd.t == pytest.approx(-rev.t, abs=1e-12)
        assert fwd.p == pytest.approx(rev.p, abs=1e-12)
        assert 0.0 <= fwd.p <= 1.0

    def test_p_monotone_in_abs_t(self):
        for df in (2.0, 4.0, 10.0, 30.0):
            ts = np.linspace(0.0, 6.0, 40)
            ps = [student_t_two_sided_p(t, df) for t in ts]
            assert all(b <= a + 1e-15 for a, b in zip(ps, ps[1:]))

    def test_small_p_prints_four_zeros(self):
        r = ttest_independent([0.9086, 0.9092, 0.9089, 0.9094, 0.9090],
                              [0.8318, 0.8325, 0.8311, 0.8330, 0.8320])
        assert r.p < 5e-5
        assert format_pvalue(r.p) == "0.0000"
        assert format_pvalue(0.021312) == "0.0213"


def reports(accs):
    return [
        TrialReport(seed=i, config_digest="x", test_accuracy=a,
                    l1_error_global=0.1 * i, runtime_seconds=1.0)
        for i, a in enumerate(accs)
    ]


class TestAggregate:
    def test_mean_and_sample_std(self):
        out = aggregate(reports([0.90, 0.92]))
        assert out["test_accuracy"]["mean"] == pytest.approx(0.91)
        assert out["test_accuracy"]["std"] == pytest.approx(0.014142135623730963, abs=1e-12)
        assert not out["degenerate"]

    def test_single_report_flagged(self):
        out = aggregate(reports([0.5]))
        assert out["test_accuracy"]["std"] == 0.0
        assert out["degenerate"]

    def test_formatting_rules(self):
        assert format_accuracy_pct(0.90861) == "90.86"
        assert format_mean_std_pct(0.90861, 0.0013) == "90.86±0.13"
        out = aggregate(reports([0.90861, 0.90861]))
        assert out["test_accuracy"]["formatted"].startswith("90.86")

    def test_permutation_invariant(self):
        accs = [0.1, 0.5, 0.9, 0.7]
        a = aggregate(reports(accs))
        b = aggregate(reports(accs[::-1]))
        assert a["test_accuracy"]["mean"] == pytest.approx(b["test_accuracy"]["mean"], abs=1e-15)
        assert a["test_accuracy"]["std"] == pytest.approx(b["test_accuracy"]["std"], abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            aggregate([])
        with pytest.raises(ConfigurationError):
            mean_std([])

    def test_all_nan_metric_reported_as_none(self):
        rs = [TrialReport(seed=i, config_digest="x", test_accuracy=0.9,
                          l1_error_global=float("nan")) for i in range(3)]
        out = aggregate(rs)
        assert out["l1_error_global"]["mean"] is None
        assert out["test_accuracy"]["mean"] == pytest.approx(0.9)


class TestCsvWriters:
    def test_summary_csv(self, tmp_path):
        write_summary_csv(
            [{"tau": 0.4, "rho": 0.5, "k": 1, "method": "reweighted", "n_seeds": 5,
              "mean_accuracy": "0.9", "std_accuracy": "0.01", "formatted": "90.00±1.00",
              "status": "ok"}],
            tmp_path / "summary.csv",
        )
        lines = (tmp_path / "summary.csv").read_text().strip().splitlines()
        assert lines[0] == "tau,rho,k,method,n_seeds,mean_accuracy,std_accuracy,formatted,status"
        assert lines[1].startswith("0.4,0.5,1,reweighted,5,")

    def test_ttest_csv(self, tmp_path):
        write_ttest_csv(
            [{"baseline": "ce", "method": "reweighted_k1", "tau": 0.4, "rho": 0.5,
              "k": 1, "t": "-3.674235", "df": "8", "p": "0.0213"}],
            tmp_path / "ttest.csv",
        )
        lines = (tmp_path / "ttest.csv").read_text().strip().splitlines()
        assert lines[0] == "baseline,method,tau,rho,k,t,df,p"
        assert lines[1].endswith("0.0213")
