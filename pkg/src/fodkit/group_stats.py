"""Group comparison statistics for the clinical analyses.

Covers fixel-wise FBA-style testing with Benjamini-Hochberg correction,
detection scoring against a reference analysis, two-sample t-tests with
Cohen's d, t-test power and sample size, one-way ANOVA and Pearson
correlation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .distributions import (f_sf, nct_cdf, normal_ppf, t_ppf, t_two_sided_p,
                            vec_t_two_sided_p)
from .errors import DegenerateInputError, FodkitError, ShapeError


class _Result:
    def to_dict(self):
        return asdict(self)


def bh_fdr(p_values, q: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up procedure.

    Returns a boolean array marking the rejected hypotheses. Ties in the
    p-value ordering are broken by original position.
    """
    p = np.asarray(p_values, dtype=np.float64).ravel()
    m = len(p)
    reject = np.zeros(m, dtype=bool)
    if m == 0:
        return reject
    order = np.argsort(p, kind="stable")
    ladder = q * np.arange(1, m + 1) / m
    below = np.flatnonzero(p[order] <= ladder)
    if len(below):
        reject[order[:below[-1] + 1]] = True
    return reject


def welch_t(a: np.ndarray, b: np.ndarray, axis: int = 0):
    """Welch's t statistic and Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.shape[axis], b.shape[axis]
    va = np.var(a, axis=axis, ddof=1) / na
    vb = np.var(b, axis=axis, ddof=1) / nb
    diff = np.mean(a, axis=axis) - np.mean(b, axis=axis)
    se2 = va + vb
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se2 > 0, diff / np.sqrt(se2), np.where(diff == 0, 0.0, np.sign(diff) * np.inf))
        df = np.where(se2 > 0, se2 ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1)), na + nb - 2.0)
    df = np.where(np.isfinite(df), df, na + nb - 2.0)
    return t, df


def student_t(a: np.ndarray, b: np.ndarray, axis: int = 0):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.shape[axis], b.shape[axis]
    sp2 = ((na - 1) * np.var(a, axis=axis, ddof=1) + (nb - 1) * np.var(b, axis=axis, ddof=1)) / (na + nb - 2)
    diff = np.mean(a, axis=axis) - np.mean(b, axis=axis)
    se2 = sp2 * (1.0 / na + 1.0 / nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se2 > 0, diff / np.sqrt(se2), np.where(diff == 0, 0.0, np.sign(diff) * np.inf))
    return t, np.full(np.shape(t), na + nb - 2.0)


# ---------------------------------------------------------------------------
# fixel-wise testing and detection scoring


@dataclass
class FixelTestResult(_Result):
    t: np.ndarray
    p_values: np.ndarray
    significant: np.ndarray
    alpha: float
    fdr: bool


def fixelwise_group_test(cohort_a, cohort_b, alpha: float = 0.05, fdr: bool = True) -> FixelTestResult:
    """Two-sided Welch t-test on FD at every fixel.

    Parameters
    ----------
    cohort_a, cohort_b : array_like, shape (n_subjects, n_fixels)
        Per-subject fiber density on a common fixel index.
    alpha : float
        Significance level; used as the FDR level ``q`` when ``fdr``.
    fdr : bool
        Apply Benjamini-Hochberg correction across all fixels.
    """
    a = np.atleast_2d(np.asarray(cohort_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(cohort_b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"cohorts have {a.shape[1]} and {b.shape[1]} fixels")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise FodkitError("fixel-wise testing needs at least 2 observations per group")
    t, df = welch_t(a, b, axis=0)
    p = vec_t_two_sided_p(t, df) if t.size else np.zeros(0)
    sig = bh_fdr(p, alpha) if fdr else p < alpha
    return FixelTestResult(t, p, sig, float(alpha), bool(fdr))


@dataclass
class DetectionScores(_Result):
    tp: int
    fn: int
    fp: int
    tn: int
    sensitivity: float
    specificity: float
    precision: float
    f1: float


def _ratio(num: int, den: int) -> float:
    return num / den if den else float("nan")


def confusion_vs_reference(reference_sig, method_sig) -> DetectionScores:
    """Score a method's significance map against a reference map.

    Undefined ratios (zero denominators) are NaN rather than 0.
    """
    ref = np.asarray(reference_sig, dtype=bool).ravel()
    met = np.asarray(method_sig, dtype=bool).ravel()
    if ref.shape != met.shape:
        raise ShapeError(f"significance maps differ in length: {len(ref)} vs {len(met)}")
    tp = int(np.sum(ref & met))
    fn = int(np.sum(ref & ~met))
    fp = int(np.sum(~ref & met))
    tn = int(np.sum(~ref & ~met))
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    prec = _ratio(tp, tp + fp)
    if math.isnan(sens) or math.isnan(prec) or sens + prec == 0:
        f1 = float("nan")
    else:
        f1 = 2 * prec * sens / (prec + sens)
    return DetectionScores(tp, fn, fp, tn, sens, spec, prec, f1)


# ---------------------------------------------------------------------------
# two-sample tests


@dataclass
class TTestResult(_Result):
    t: float
    df: float
    p: float
    cohens_d: float
    welch: bool


def cohens_d(a, b) -> float:
    """Standardised mean difference using the pooled standard deviation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    pooled = ((na - 1) * np.var(a, ddof=1) + (nb - 1) * np.var(b, ddof=1)) / (na + nb - 2)
    if pooled <= 0:
        raise DegenerateInputError("pooled variance is zero; Cohen's d is undefined")
    return float((np.mean(a) - np.mean(b)) / math.sqrt(pooled))


def independent_ttest(a: Sequence[float], b: Sequence[float], welch: bool = True) -> TTestResult:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) < 2 or len(b) < 2:
        raise FodkitError("each sample needs at least 2 observations")
    d = cohens_d(a, b)
    t, df = welch_t(a, b) if welch else student_t(a, b)
    t, df = float(t), float(df)
    return TTestResult(t, df, t_two_sided_p(t, df), d, bool(welch))


def paired_ttest(diffs, axis: int = 0):
    """One-sample t on paired differences; returns ``(t, df)`` arrays."""
    d = np.asarray(diffs, dtype=np.float64)
    n = d.shape[axis]
    mean = np.mean(d, axis=axis)
    sd = np.std(d, axis=axis, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(sd > 0, mean / (sd / math.sqrt(n)), np.where(mean == 0, 0.0, np.sign(mean) * np.inf))
    return t, np.full(np.shape(t), n - 1.0)


# ---------------------------------------------------------------------------
# power and sample size


def ttest_power(d: float, n: int, alpha: float = 0.05) -> float:
    """Power of the two-sided two-sample t-test with ``n`` subjects per group."""
    df = 2.0 * n - 2.0
    ncp = abs(d) * math.sqrt(n / 2.0)
    crit = t_ppf(1.0 - alpha / 2.0, df)
    return 1.0 - nct_cdf(crit, df, ncp) + nct_cdf(-crit, df, ncp)


def sample_size_for_power(d: float, power: float = 0.8, alpha: float = 0.05) -> int:
    """Smallest per-group ``n`` reaching ``power`` for effect size ``d``.

    Starts from the normal approximation and refines with exact
    noncentral-t power.
    """
    if d == 0 or not math.isfinite(d):
        raise FodkitError("effect size must be finite and nonzero")
    if not 0.0 < power < 1.0 or not 0.0 < alpha < 1.0:
        raise FodkitError("power and alpha must lie in (0, 1)")
    z = normal_ppf(1.0 - alpha / 2.0) + normal_ppf(power)
    n = max(2, int(math.ceil(2.0 * (z / abs(d)) ** 2)))
    while ttest_power(d, n, alpha) < power:
        n += 1
    while n > 2 and ttest_power(d, n - 1, alpha) >= power:
        n -= 1
    return n


# ---------------------------------------------------------------------------
# ANOVA and correlation


@dataclass
class AnovaResult(_Result):
    ss_between: float
    ss_within: float
    df_between: int
    df_within: int
    F: float
    p: float


def anova_from_sums_of_squares(ss_between: float, df_between: int,
                               ss_within: float, df_within: int) -> AnovaResult:
    if df_between < 1 or df_within < 1:
        raise FodkitError("ANOVA degrees of freedom must be positive")
    if ss_within <= 0:
        raise DegenerateInputError("within-group sum of squares is zero; F is undefined")
    F = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(float(ss_between), float(ss_within), int(df_between), int(df_within),
                       float(F), f_sf(F, df_between, df_within))


def one_way_anova(groups) -> AnovaResult:
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(groups) < 2:
        raise FodkitError("ANOVA needs at least 2 groups")
    if any(len(g) < 2 for g in groups):
        raise FodkitError("every ANOVA group needs at least 2 samples")
    grand = np.mean(np.concatenate(groups))
    ss_between = sum(len(g) * (np.mean(g) - grand) ** 2 for g in groups)
    ss_within = sum(np.sum((g - np.mean(g)) ** 2) for g in groups)
    n = sum(len(g) for g in groups)
    return anova_from_sums_of_squares(ss_between, len(groups) - 1, ss_within, n - len(groups))


@dataclass
class CorrelationResult(_Result):
    r: float
    p: float
    n: int


def pearson_correlation(x, y) -> CorrelationResult:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ShapeError(f"x has {len(x)} samples, y has {len(y)}")
    if len(x) < 3:
        raise FodkitError("Pearson correlation needs at least 3 pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("zero variance; correlation is undefined")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    n = len(x)
    if abs(r) == 1.0:
        p = 0.0
    else:
        p = t_two_sided_p(r * math.sqrt((n - 2) / (1.0 - r * r)), n - 2.0)
    return CorrelationResult(r, p, n)
