"""FOD-level similarity between an estimate and a reference volume."""
from __future__ import annotations

import math
from typing import Dict, Mapping

import numpy as np

from .errors import EmptyRegionError, ShapeError
from .report import MetricReport
from .types import Mask, SHVolume


def _check_pair(gt: SHVolume, est: SHVolume, mask: Mask):
    if gt.dims != est.dims or gt.ncoef != est.ncoef:
        raise ShapeError(f"volume shapes differ: {gt.data.shape} vs {est.data.shape}")
    mask.check_dims(gt.dims)
    if mask.n_voxels == 0:
        raise EmptyRegionError("mask selects no voxels")


def psnr(gt: SHVolume, est: SHVolume, mask: Mask) -> float:
    """Peak signal-to-noise ratio in dB over all masked voxels and coefficients.

    The peak is ``max |gt|`` inside the mask, so a global rescaling of both
    volumes leaves the result unchanged. Returns ``math.inf`` when the two
    volumes agree exactly inside the mask.
    """
    _check_pair(gt, est, mask)
    g = gt.data[mask.data].astype(np.float64)
    e = est.data[mask.data].astype(np.float64)
    mse = float(np.mean((g - e) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(np.max(np.abs(g)))
    if peak == 0.0:
        return -math.inf
    return 10.0 * math.log10(peak * peak / mse)


def angular_correlation(u, v, include_l0: bool = False):
    """Angular correlation coefficient of SH coefficient vectors.

    Works on single vectors or on ``(..., ncoef)`` stacks. The ``l = 0``
    term is excluded unless ``include_l0``. Vectors with zero norm over the
    summed range give NaN.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"coefficient shapes differ: {u.shape} vs {v.shape}")
    if not include_l0:
        u, v = u[..., 1:], v[..., 1:]
    num = np.sum(u * v, axis=-1)
    den = np.sqrt(np.sum(u * u, axis=-1)) * np.sqrt(np.sum(v * v, axis=-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    r = np.clip(r, -1.0, 1.0)
    return float(r) if r.ndim == 0 else r


def voxelwise_angular_correlation(gt: SHVolume, est: SHVolume, mask: Mask,
                                  include_l0: bool = False) -> np.ndarray:
    _check_pair(gt, est, mask)
    return angular_correlation(gt.data[mask.data], est.data[mask.data], include_l0)


def roi_fod_report(gt: SHVolume, est: SHVolume, masks: Mapping[str, Mask],
                   include_l0: bool = False) -> MetricReport:
    """PSNR and mean voxelwise angular correlation for every named mask.

    Voxels where either FOD has zero norm are left out of the mean. An
    empty mask yields an entry with ``"error"`` set instead of numbers.
    """
    results: Dict[str, dict] = {}
    for name, mask in masks.items():
        try:
            value = psnr(gt, est, mask)
        except EmptyRegionError as exc:
            results[name] = {"error": str(exc), "n_voxels": 0}
            continue
        r = voxelwise_angular_correlation(gt, est, mask, include_l0)
        valid = r[~np.isnan(r)]
        results[name] = {
            "psnr_db": value,
            "psnr_infinite": math.isinf(value) and value > 0,
            "mean_r_angular": float(np.mean(valid)) if len(valid) else float("nan"),
            "n_voxels": mask.n_voxels,
            "n_r_valid": int(len(valid)),
        }
    return MetricReport("fod-metrics", results, {"include_l0": include_l0})
