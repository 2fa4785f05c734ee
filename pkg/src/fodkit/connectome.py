"""Comparison of estimated connectomes against a reference cohort."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .distributions import vec_t_two_sided_p
from .errors import DegenerateInputError, FodkitError, ShapeError
from .graph import GraphMetrics
from .group_stats import bh_fdr, paired_ttest
from .types import ConnMatrix


def _stack(cohort) -> np.ndarray:
    mats = [c.weights if isinstance(c, ConnMatrix) else np.asarray(c, dtype=np.float64) for c in cohort]
    if not mats:
        raise ShapeError("empty cohort")
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ShapeError(f"cohort matrices differ in shape: {sorted(shapes)}")
    return np.stack(mats)


def _paired(gt_cohort, est_cohort) -> Tuple[np.ndarray, np.ndarray]:
    gt, est = _stack(gt_cohort), _stack(est_cohort)
    if gt.shape != est.shape:
        raise ShapeError(f"cohorts differ: {gt.shape} vs {est.shape}")
    return gt, est


def disparity(gt_cohort, est_cohort) -> Tuple[np.ndarray, float]:
    """Subject-averaged ``|est - gt|`` matrix and the mean connectome disparity.

    The scalar is the mean over subjects of each subject's mean absolute
    difference over upper-triangle edges.
    """
    gt, est = _paired(gt_cohort, est_cohort)
    diff = np.abs(est - gt)
    n = gt.shape[1]
    iu = np.triu_indices(n, 1)
    per_subject = diff[:, iu[0], iu[1]].mean(axis=1) if len(iu[0]) else np.zeros(len(diff))
    mat = diff.mean(axis=0)
    mat = 0.5 * (mat + mat.T)
    np.fill_diagonal(mat, 0.0)
    return mat, float(per_subject.mean())


def _count_inversions(b: np.ndarray) -> int:
    """Pairs ``i < j`` with ``b[i] > b[j]``, by bottom-up merge sort."""
    runs = [b[i:i + 1] for i in range(len(b))]
    swaps = 0
    while len(runs) > 1:
        merged = []
        for k in range(0, len(runs) - 1, 2):
            left, right = runs[k], runs[k + 1]
            swaps += int(np.sum(len(left) - np.searchsorted(left, right, side="right")))
            merged.append(np.sort(np.concatenate([left, right]), kind="stable"))
        if len(runs) % 2:
            merged.append(runs[-1])
        runs = merged
    return swaps


def _tie_pairs(sorted_values: np.ndarray) -> int:
    if len(sorted_values) == 0:
        return 0
    _, counts = np.unique(sorted_values, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(a, b) -> float:
    """Kendall's tau-b with tie correction, in O(n log n).

    ``(C - D) / sqrt((n0 - n1) (n0 - n2))`` with ``n1``/``n2`` the tied
    pairs within ``a``/``b``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise ShapeError(f"kendall_tau inputs differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise FodkitError("kendall_tau needs at least 2 values")
    n0 = n * (n - 1) // 2
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    n1 = _tie_pairs(a)
    n2 = _tie_pairs(np.sort(b))
    pairs = np.stack([a, b], axis=1)
    _, joint = np.unique(pairs, axis=0, return_counts=True)
    n3 = int(np.sum(joint * (joint - 1) // 2))
    if n1 == n0 or n2 == n0:
        raise DegenerateInputError("kendall_tau is undefined for constant input")
    swaps = _count_inversions(b)
    num = n0 - n1 - n2 + n3 - 2 * swaps
    return float(num / math.sqrt((n0 - n1) * (n0 - n2)))


@dataclass
class EdgeTestResult:
    fraction: float
    n_tested: int
    n_significant: int
    p_values: np.ndarray
    significant: np.ndarray
    alpha: float

    def to_dict(self):
        return {"significant_edge_fraction": self.fraction, "n_tested": self.n_tested,
                "n_significant": self.n_significant, "alpha": self.alpha}


def edge_paired_tests(gt_cohort, est_cohort, alpha: float = 0.05) -> EdgeTestResult:
    """Two-sided paired t-test of ``est - gt`` at every upper-triangle edge.

    Edges whose differences are identically zero across subjects are not
    tested. Benjamini-Hochberg at level ``alpha`` runs over tested edges.
    ``p_values`` and ``significant`` are full ``n x n`` matrices (NaN/False
    for untested edges and the lower triangle).
    """
    gt, est = _paired(gt_cohort, est_cohort)
    n_sub, n, _ = gt.shape
    if n_sub < 3:
        raise FodkitError(f"edge-wise paired tests need at least 3 subjects, got {n_sub}")
    iu = np.triu_indices(n, 1)
    d = (est - gt)[:, iu[0], iu[1]]
    testable = ~np.all(d == 0, axis=0)
    t, df = paired_ttest(d[:, testable], axis=0)
    p = vec_t_two_sided_p(t, df) if t.size else np.zeros(0)
    sig = bh_fdr(p, alpha)
    pmat = np.full((n, n), np.nan)
    smat = np.zeros((n, n), dtype=bool)
    rows, cols = iu[0][testable], iu[1][testable]
    pmat[rows, cols] = p
    smat[rows, cols] = sig
    n_tested = int(testable.sum())
    n_sig = int(sig.sum())
    return EdgeTestResult(n_sig / n_tested if n_tested else 0.0, n_tested, n_sig, pmat, smat, float(alpha))


def significant_edge_fraction(gt_cohort, est_cohort, alpha: float = 0.05) -> float:
    return edge_paired_tests(gt_cohort, est_cohort, alpha).fraction


def difference_ratio(est_value: float, gt_value: float) -> float:
    """Percentage difference ``(est - gt) / gt * 100``."""
    if gt_value == 0:
        raise DegenerateInputError("difference ratio is undefined for a zero reference value")
    return (est_value - gt_value) / gt_value * 100.0


def difference_ratios(est: Dict[str, float], gt: Dict[str, float]) -> Dict[str, dict]:
    """DR for every metric present in both mappings.

    Each entry carries the raw percentage plus a two-decimal display string
    such as ``"-0.29%"``. Metrics with a zero reference get ``dr_percent``
    NaN and an ``error`` message.
    """
    if isinstance(est, GraphMetrics):
        est = est.values()
    if isinstance(gt, GraphMetrics):
        gt = gt.values()
    out = {}
    for name in sorted(set(est) & set(gt)):
        e, g = est[name], gt[name]
        if not isinstance(e, (int, float)) or not isinstance(g, (int, float)) or isinstance(e, bool):
            continue
        entry = {"est": float(e), "gt": float(g)}
        try:
            dr = difference_ratio(float(e), float(g))
            entry["dr_percent"] = dr
            entry["dr_display"] = f"{dr:.2f}%"
        except DegenerateInputError as exc:
            entry["dr_percent"] = float("nan")
            entry["error"] = str(exc)
        out[name] = entry
    return out


def cohort_kendall_tau(gt_cohort, est_cohort) -> np.ndarray:
    """Per-subject Kendall tau between upper-triangle edge weights."""
    gt, est = _paired(gt_cohort, est_cohort)
    iu = np.triu_indices(gt.shape[1], 1)
    return np.array([kendall_tau(g[iu], e[iu]) for g, e in zip(gt, est)])
