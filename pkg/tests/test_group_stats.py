import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fodkit.errors import DegenerateInputError, FodkitError, ShapeError
from fodkit.group_stats import (anova_from_sums_of_squares, cohens_d, confusion_vs_reference,
                                fixelwise_group_test, independent_ttest, one_way_anova,
                                pearson_correlation, sample_size_for_power, ttest_power)


def test_ttest_identical_samples():
    r = independent_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.t == 0 and r.p == 1 and r.cohens_d == 0


def test_cohens_d_pooled():
    assert cohens_d([1, 2, 3, 4], [3, 4, 5, 6]) == pytest.approx(-2 / math.sqrt(5 / 3))
    assert cohens_d([1, 2, 3, 4], [3, 4, 5, 6]) == pytest.approx(-1.549, abs=5e-4)
    with pytest.raises(DegenerateInputError):
        cohens_d([1, 1], [1, 1])


def test_ttest_matches_scipy(rng):
    for _ in range(100):
        a = rng.normal(size=rng.integers(2, 30))
        b = rng.normal(0.5, 2, size=rng.integers(2, 30))
        w = independent_ttest(a, b)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert w.t == pytest.approx(ref.statistic, rel=1e-10)
        assert abs(w.p - ref.pvalue) < 1e-9
        s = independent_ttest(a, b, welch=False)
        ref = stats.ttest_ind(a, b)
        assert abs(s.p - ref.pvalue) < 1e-9


@given(st.integers(0, 2 ** 32 - 1))
def test_ttest_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=6), rng.normal(size=9)
    x, y = independent_ttest(a, b), independent_ttest(b, a)
    assert x.t == -y.t and x.cohens_d == pytest.approx(-y.cohens_d, abs=1e-15) and x.p == y.p


def test_ttest_too_small():
    with pytest.raises(FodkitError):
        independent_ttest([1.0], [1.0, 2.0])


def test_sample_size_d1():
    assert sample_size_for_power(1.0, 0.8, 0.05) == 17
    assert sample_size_for_power(-1.0, 0.8, 0.05) == 17
    with pytest.raises(FodkitError):
        sample_size_for_power(0.0)


def test_sample_size_against_simulation():
    rng = np.random.default_rng(2024)
    trials = 100_000
    crit_n = None
    for n in range(14, 21):
        a = rng.normal(size=(trials, n))
        b = rng.normal(1.0, 1.0, size=(trials, n))
        p = stats.ttest_ind(a, b, axis=1).pvalue
        if np.mean(p < 0.05) >= 0.8:
            crit_n = n
            break
    assert crit_n is not None and abs(crit_n - 17) <= 1


def test_power_matches_scipy_nct():
    for n in (5, 17, 40):
        df = 2 * n - 2
        ncp = 0.7 * math.sqrt(n / 2)
        crit = stats.t.ppf(0.975, df)
        ref = stats.nct.sf(crit, df, ncp) + stats.nct.cdf(-crit, df, ncp)
        assert ttest_power(0.7, n) == pytest.approx(ref, abs=1e-9)


@given(st.floats(0.2, 2.0), st.floats(0.5, 0.95))
def test_sample_size_round_trip(d, power):
    n = sample_size_for_power(d, power)
    assert ttest_power(d, n) >= power
    if n > 2:
        assert ttest_power(d, n - 1) < power


def test_sample_size_monotone_in_power():
    ns = [sample_size_for_power(0.5, p) for p in np.linspace(0.5, 0.95, 10)]
    assert all(b >= a for a, b in zip(ns, ns[1:]))


def test_sample_size_inverse_square_law():
    for d in (0.2, 0.3, 0.4):
        ratio = sample_size_for_power(d) / sample_size_for_power(2 * d)
        assert abs(ratio - 4) / 4 <= 0.15


def test_anova_published_rows():
    r = anova_from_sums_of_squares(23.8401, 2, 802.4890, 36)
    assert r.F == pytest.approx(0.5347, abs=1e-4)
    assert abs(r.p - 0.5904) <= 0.001
    r = anova_from_sums_of_squares(9.0563, 2, 244.4170, 36)
    assert abs(r.p - 0.5195) <= 0.001


def test_anova_against_scipy_and_identity(rng):
    for _ in range(20):
        groups = [rng.normal(m, 1, size=rng.integers(2, 12)) for m in rng.normal(size=3)]
        r = one_way_anova(groups)
        ref = stats.f_oneway(*groups)
        assert r.F == pytest.approx(ref.statistic, rel=1e-10)
        assert r.p == pytest.approx(ref.pvalue, abs=1e-10)
        allv = np.concatenate(groups)
        total = np.sum((allv - allv.mean()) ** 2)
        assert r.ss_between + r.ss_within == pytest.approx(total, rel=1e-9)


def test_anova_errors():
    with pytest.raises(FodkitError):
        one_way_anova([[1.0, 2.0]])
    with pytest.raises(DegenerateInputError):
        anova_from_sums_of_squares(1.0, 2, 0.0, 10)


def test_pearson():
    x = np.arange(10.0)
    assert pearson_correlation(x, 2 * x + 1).r == pytest.approx(1.0)
    assert pearson_correlation(x, -x).r == pytest.approx(-1.0)
    with pytest.raises(ShapeError):
        pearson_correlation(x, x[:5])
    with pytest.raises(DegenerateInputError):
        pearson_correlation(np.ones(5), x[:5])


def test_pearson_formula_and_p(rng):
    for _ in range(20):
        x, y = rng.normal(size=(2, 25))
        r = pearson_correlation(x, y)
        cov = np.sum((x - x.mean()) * (y - y.mean()))
        ref = cov / math.sqrt(np.sum((x - x.mean()) ** 2) * np.sum((y - y.mean()) ** 2))
        assert r.r == pytest.approx(ref, abs=1e-12)
        assert r.p == pytest.approx(stats.pearsonr(x, y).pvalue, abs=1e-9)


def test_confusion_examples():
    ref = np.array([1, 1, 0, 0, 1], bool)
    s = confusion_vs_reference(ref, ref)
    assert s.sensitivity == s.specificity == s.precision == s.f1 == 1.0
    s = confusion_vs_reference(ref, np.zeros(5, bool))
    assert s.sensitivity == 0 and s.specificity == 1 and math.isnan(s.precision)
    with pytest.raises(ShapeError):
        confusion_vs_reference(ref, ref[:3])


def test_confusion_constructed_counts():
    ref = np.r_[np.ones(10000, bool), np.zeros(10000, bool)]
    met = np.r_[np.ones(7014, bool), np.zeros(2986, bool), np.ones(412, bool), np.zeros(9588, bool)]
    s = confusion_vs_reference(ref, met)
    assert (s.tp, s.fn, s.fp, s.tn) == (7014, 2986, 412, 9588)
    assert s.sensitivity == pytest.approx(0.7014)
    assert s.specificity == pytest.approx(0.9588)
    prec = 7014 / 7426
    assert s.f1 == pytest.approx(2 * prec * 0.7014 / (prec + 0.7014))


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=50))
def test_confusion_swap(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    x, y = confusion_vs_reference(a, b), confusion_vs_reference(b, a)
    assert (x.tp, x.tn, x.fp, x.fn) == (y.tp, y.tn, y.fn, y.fp)
    assert x.tp + x.tn + x.fp + x.fn == len(pairs)


def test_fixelwise_null_false_positive_rate():
    rng = np.random.default_rng(5)
    rates = []
    for _ in range(20):
        a = rng.normal(size=(10, 500))
        b = rng.normal(size=(10, 500))
        rates.append(fixelwise_group_test(a, b, fdr=False).significant.mean())
        assert fixelwise_group_test(a, b, fdr=True).significant.sum() <= 2
    assert np.mean(rates) <= 0.05 + 0.01


def test_fixelwise_effect_detection():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(12, 400))
    b = rng.normal(size=(12, 400))
    effect = np.zeros(400, bool)
    effect[:80] = True
    b[:, effect] += 3.0
    r = fixelwise_group_test(a, b)
    assert r.significant[effect].mean() >= 0.95
    assert r.significant[~effect].mean() <= 0.02
    ref = stats.ttest_ind(a, b, equal_var=False)
    np.testing.assert_allclose(r.p_values, ref.pvalue, atol=1e-9)


def test_fixelwise_errors():
    with pytest.raises(FodkitError):
        fixelwise_group_test(np.ones((1, 3)), np.ones((4, 3)))
    with pytest.raises(ShapeError):
        fixelwise_group_test(np.ones((3, 3)), np.ones((3, 4)))
