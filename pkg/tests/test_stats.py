import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gammaln

from powtime import stats
from powtime.errors import DegenerateInputError, DomainError, ValidationError
from powtime.mining_core import sample_waiting_times
from powtime.rng import make_rng
from powtime.stats import EpochRecord, IntervalSeries

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_sample_mean():
    assert stats.sample_mean([1, 2, 3]) == 2
    assert stats.sample_mean(IntervalSeries([600.0])) == 600
    with pytest.raises(DomainError):
        stats.sample_mean([])


def test_sample_mean_at_reported_scale():
    x = sample_waiting_times(1 / 585.43, make_rng(585), 425_000)
    assert abs(stats.sample_mean(x) - 585.43) < 3


def test_interval_series_validation():
    with pytest.raises(DomainError):
        IntervalSeries([1.0, -1.0])
    assert len(IntervalSeries([])) == 0


def test_trim_examples():
    x = np.arange(1, 101, dtype=float)
    np.testing.assert_array_equal(stats.trim_percentiles(x, 0, 0), x)
    np.testing.assert_array_equal(stats.trim_percentiles(x, 1, 1), np.arange(2, 100))
    shuffled = make_rng(0).permutation(x)
    kept = stats.trim_percentiles(shuffled, 1, 1)
    np.testing.assert_array_equal(kept, shuffled[(shuffled >= 2) & (shuffled <= 99)])
    s = stats.trim_percentiles(IntervalSeries(x, "ingested"), 5, 5)
    assert isinstance(s, IntervalSeries) and s.origin == "ingested"
    for lo, hi in ((-1, 0), (0, -1), (50, 50), (99, 2)):
        with pytest.raises(DomainError):
            stats.trim_percentiles(x, lo, hi)


@settings(max_examples=200)
@given(x=st.lists(st.floats(0, 1e6), min_size=1, max_size=300), lo=st.floats(0, 20), hi=st.floats(0, 20))
def test_trim_properties(x, lo, hi):
    x = np.array(x)
    t = stats.trim_percentiles(x, lo, hi)
    assert t.size >= 1
    assert t.max() <= x.max() and t.min() >= x.min()


@settings(max_examples=100)
@given(x=st.lists(st.floats(0, 1e4), min_size=2, max_size=400))
def test_trimmed_mean_between_percentiles(x):
    x = np.array(x)
    m = stats.sample_mean(stats.trim_percentiles(x, 1, 1))
    srt = np.sort(x)
    lo_v = srt[math.floor(x.size / 100)]
    hi_v = srt[math.ceil(0.99 * x.size) - 1]
    assert lo_v - 1e-9 <= m <= hi_v + 1e-9


def _acf_brute(x, k):
    n = len(x)
    m = sum(x) / n
    num = sum((x[i] - m) * (x[i + k] - m) for i in range(n - k))
    den = sum((v - m) ** 2 for v in x)
    return num / den


def test_autocorrelation_examples():
    assert stats.autocorrelation([1, 2, 3, 4], 1) == [(1, pytest.approx(0.25, abs=1e-15))]
    assert _acf_brute([1, 2, 3, 4], 1) == 0.25
    assert _acf_brute([3, 1, 4, 1, 5], 0) == pytest.approx(1.0)
    x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]
    got = stats.autocorrelation(x, 5)
    assert [k for k, _ in got] == [1, 2, 3, 4, 5]
    for k, r in got:
        assert r == pytest.approx(_acf_brute(x, k), abs=1e-14)
    with pytest.raises(DegenerateInputError):
        stats.autocorrelation([2.0] * 30, 20)
    with pytest.raises(DomainError):
        stats.autocorrelation([1, 2, 3], 3)
    with pytest.raises(DomainError):
        stats.autocorrelation([1, 2, 3], 0)


def test_autocorrelation_white_noise():
    x = sample_waiting_times(1 / 600, make_rng(8), 100_000)
    assert max(abs(r) for _, r in stats.autocorrelation(x, 20)) <= 0.02


@settings(max_examples=100)
@given(x=st.lists(st.floats(0, 1e3), min_size=6, max_size=60), a=st.floats(0.01, 100), b=finite)
def test_autocorrelation_affine_invariance(x, a, b):
    x = np.array(x)
    if np.ptp(x) < 1e-3:
        return
    r1 = stats.autocorrelation(x, 3)
    r2 = stats.autocorrelation(a * x + b, 3)
    for (_, u), (_, v) in zip(r1, r2):
        assert u == pytest.approx(v, abs=1e-10)


def test_empirical_survival_examples():
    d = [1, 2, 2, 5]
    c = stats.empirical_survival(d, [0, 2, 6])
    np.testing.assert_array_equal(c.survival, [1.0, 0.75, 0.0])
    c = stats.empirical_survival(d)
    assert list(c) == [(1.0, 1.0), (2.0, 0.75), (5.0, 0.25)]
    with pytest.raises(DomainError):
        stats.empirical_survival([], [1])
    with pytest.raises(DomainError):
        stats.empirical_survival(d, [3, 1])


@given(d=st.lists(st.floats(0, 1e5), min_size=1, max_size=100),
       th=st.lists(st.floats(0, 1e5), max_size=30))
def test_survival_properties(d, th):
    th = sorted(th)
    c = stats.empirical_survival(d, [0.0] + th)
    assert c.survival[0] == 1.0
    assert np.all(np.diff(c.survival) <= 0)
    assert np.all((c.survival >= 0) & (c.survival <= 1))
    brute = [sum(v >= t for v in d) / len(d) for t in th]
    np.testing.assert_allclose(c.survival[1:], brute)


def test_split_consecutive():
    parts = stats.split_consecutive(np.arange(232), 3)
    assert [p.size for p in parts] == [78, 77, 77]
    assert parts[1][0] == 78
    assert [p.size for p in stats.split_consecutive([1], 3)] == [1, 0, 0]


def _t_cdf_quadrature(t, df):
    logc = gammaln((df + 1) / 2) - gammaln(df / 2) - 0.5 * math.log(df * math.pi)
    pdf = lambda u: math.exp(logc - (df + 1) / 2 * math.log1p(u * u / df))  # noqa: E731
    val, _ = integrate.quad(pdf, 0, abs(t), epsabs=1e-13, epsrel=1e-13, limit=200)
    return 0.5 + math.copysign(val, t)


@pytest.mark.parametrize("df", [1, 10, 210])
def test_t_cdf_against_quadrature(df):
    for t in np.linspace(-5, 5, 41):
        assert stats.student_t_cdf(t, df) == pytest.approx(_t_cdf_quadrature(t, df), abs=1e-6)


def test_t_cdf_cauchy_closed_form():
    for t in (-3.0, -0.5, 0.0, 2.0, 7.0):
        assert stats.student_t_cdf(t, 1) == pytest.approx(0.5 + math.atan(t) / math.pi, abs=1e-12)


def test_t_ppf_inverts_cdf():
    for df in (1, 5, 210):
        for q in (0.025, 0.5, 0.9, 0.975):
            assert stats.student_t_cdf(stats.student_t_ppf(q, df), df) == pytest.approx(q, abs=1e-10)
    # tabulated critical values
    assert stats.student_t_ppf(0.975, 1) == pytest.approx(12.7062, abs=1e-4)
    assert stats.student_t_ppf(0.975, 10) == pytest.approx(2.2281, abs=1e-4)


def _epoch(i, early, late, n=2016):
    h = n // 2
    return EpochRecord(i, np.r_[np.full(h, early), np.full(h, late)])


def test_half_split_hand_example():
    res = stats.half_split_analysis([_epoch(0, 600, 598), _epoch(1, 600, 596)])
    assert res.mean_paired_diff == pytest.approx(-3)
    assert res.t_statistic == pytest.approx(-3)
    # df = 1: p = 1 - 2 atan(3) / pi
    assert res.p_value == pytest.approx(1 - 2 * math.atan(3) / math.pi, abs=1e-9)
    assert res.p_value == pytest.approx(0.2048, abs=1e-4)
    assert res.frac_late_shorter == 1.0
    assert res.ci95_low == pytest.approx(-3 - 12.7062047, abs=1e-6)
    assert res.ci95_low <= res.mean_paired_diff <= res.ci95_high
    assert not res.degenerate


def test_half_split_degenerate():
    res = stats.half_split_analysis([_epoch(0, 600, 600), _epoch(1, 580, 580)])
    assert res.mean_paired_diff == 0 and res.frac_late_shorter == 0
    assert res.p_value == 1.0 and res.degenerate


def test_half_split_validation():
    with pytest.raises(ValidationError):
        stats.half_split_analysis([_epoch(0, 1, 1), _epoch(1, 1, 1, n=2014)])
    with pytest.raises(DomainError):
        stats.half_split_analysis([_epoch(0, 1, 1)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(100, 1000), st.floats(100, 1000)), min_size=2, max_size=12))
def test_half_split_antisymmetry(pairs):
    fwd = [_epoch(i, a, b, n=8) for i, (a, b) in enumerate(pairs)]
    rev = [_epoch(i, b, a, n=8) for i, (a, b) in enumerate(pairs)]
    r1 = stats.half_split_analysis(fwd, 8)
    r2 = stats.half_split_analysis(rev, 8)
    assert r1.mean_paired_diff == pytest.approx(-r2.mean_paired_diff, abs=1e-9)
    if not r1.degenerate:
        assert r1.t_statistic == pytest.approx(-r2.t_statistic, rel=1e-9, abs=1e-9)
        assert r1.p_value == pytest.approx(r2.p_value, abs=1e-9)
    diffs = [b - a for a, b in pairs]
    untied = sum(1 for d in diffs if d != 0) / len(diffs)
    assert r1.frac_late_shorter + r2.frac_late_shorter == pytest.approx(untied)


def test_hashrate_ratio():
    assert stats.hashrate_ratio(590.08, 580.78) == pytest.approx(1.016, abs=5e-4)
    assert stats.hashrate_ratio(600, 600) == 1.0
    assert stats.hashrate_ratio(600, 580.78) == pytest.approx(1.033, abs=5e-4)
    with pytest.raises(DomainError):
        stats.hashrate_ratio(0, 1)


def test_ks_uniform():
    assert stats.ks_uniform([0.5]) == 0.5
    n = 40
    assert stats.ks_uniform((np.arange(1, n + 1) - 0.5) / n) == pytest.approx(0.5 / n)
    assert stats.ks_uniform(make_rng(4).random(100_000)) < 0.01
    with pytest.raises(DomainError):
        stats.ks_uniform([0.2, 1.2])
    with pytest.raises(DomainError):
        stats.ks_uniform([])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_ks_uniform_brute_force(u):
    # sup over a fine grid plus the jump points, from the step-function definition
    grid = np.unique(np.r_[np.linspace(0, 1, 2001), u])
    brute = 0.0
    for x in grid:
        fn = np.mean(np.array(u) <= x)
        fn_left = np.mean(np.array(u) < x)
        brute = max(brute, abs(fn - x), abs(fn_left - x))
    assert stats.ks_uniform(u) == pytest.approx(brute, abs=1e-12)


def test_ks_two_sample_basic():
    assert stats.ks_two_sample([1, 2, 3], [1, 2, 3]) == 0
    assert stats.ks_two_sample([1, 2], [3, 4]) == 1


def test_histogram_normalisation():
    x = sample_waiting_times(1 / 600, make_rng(1), 20_000)
    left, right, counts, dens = stats.histogram(x, 60, 0, 3000)
    assert np.sum(dens * (right - left)) == pytest.approx(1, abs=1e-9)
    assert counts.sum() == np.sum(x <= 3000)
