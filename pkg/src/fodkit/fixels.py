"""Fixel segmentation, matching and fixel-level error metrics.

Segmentation evaluates each voxel's FOD on a sphere mesh, clamps negative
lobes, and partitions the positive vertices into lobes by steepest-ascent
hill climbing over mesh adjacency. Antipodal lobes are merged into one
fixel whose fiber density integrates both halves.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .errors import EmptyRegionError, FodkitError, ShapeError
from .sh import SphereMesh, make_icosphere
from .types import FixelSet, Mask, SHVolume

DEFAULT_PEAK_THRESHOLD = 0.10
DEFAULT_MAX_FIXELS = 10
DEFAULT_MATCH_THRESHOLD_DEG = 45.0


def canonical_direction(d: np.ndarray) -> np.ndarray:
    """Flip each axis so its largest-magnitude component is positive."""
    d = np.asarray(d, dtype=np.float64).reshape(-1, 3)
    big = np.argmax(np.abs(d), axis=1)
    sign = np.where(d[np.arange(len(d)), big] < 0, -1.0, 1.0)
    return d * sign[:, None]


def axial_angle_deg(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle between axes ``u`` and ``v`` (rows), in degrees, ignoring sign.

    Computed as ``atan2(|u x v|, |u . v|)`` so identical inputs give exactly 0.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.abs(np.sum(u * v, axis=-1))
    return np.degrees(np.arctan2(cross, dot))


def _check_antipodal(mesh: SphereMesh):
    anti = mesh.antipode
    if (anti is None or len(anti) != mesh.n_vertices
            or not np.array_equal(anti[anti], np.arange(mesh.n_vertices))
            or not np.allclose(mesh.vertices[anti], -mesh.vertices, atol=1e-9)):
        raise FodkitError("fixel segmentation needs an antipodally symmetric mesh")


def segment_lobes(amplitudes: np.ndarray, mesh: SphereMesh) -> np.ndarray:
    """Lobe label per vertex for a stack of amplitude maps.

    Parameters
    ----------
    amplitudes : ndarray, shape (m, n_vertices)
        Non-negative amplitudes (negatives must already be clamped).
    mesh : SphereMesh

    Returns
    -------
    labels : ndarray of int, shape (m, n_vertices)
        Index of the lobe's peak vertex, or -1 for zero-amplitude vertices.
        Antipodal lobe pairs share the lower of their two peak indices.
    """
    amp = np.asarray(amplitudes, dtype=np.float64)
    m, nv = amp.shape
    nbr = mesh.neighbor_array()
    ar = np.arange(nv)
    padded = np.concatenate([amp, np.full((m, 1), -np.inf)], axis=1)
    nbr_amp = padded[:, nbr]
    # neighbour rows are sorted, so argmax resolves equal amplitudes to the lowest index
    pick = np.argmax(nbr_amp, axis=2)
    best = nbr[ar[None, :], pick]
    best_amp = np.take_along_axis(nbr_amp, pick[..., None], axis=2)[..., 0]
    positive = amp > 0
    climb = positive & ((best_amp > amp) | ((best_amp == amp) & (best < ar)))
    parent = np.where(climb, best, ar[None, :])
    while True:
        nxt = np.take_along_axis(parent, parent, axis=1)
        if np.array_equal(nxt, parent):
            break
        parent = nxt
    is_root = positive & (parent == ar)
    anti = mesh.antipode
    root_anti = anti[parent]
    pair = np.take_along_axis(is_root, root_anti, axis=1)
    labels = np.where(pair, np.minimum(parent, root_anti), parent)
    return np.where(positive, labels, -1)


def extract_fixels(vol: SHVolume, mask: Optional[Mask] = None, mesh: Optional[SphereMesh] = None,
                   peak_threshold: float = DEFAULT_PEAK_THRESHOLD,
                   max_fixels: int = DEFAULT_MAX_FIXELS, chunk: int = 256) -> FixelSet:
    """Segment every masked voxel's FOD into fixels.

    Lobes with peak amplitude below ``peak_threshold`` are dropped and at
    most ``max_fixels`` lobes (largest fiber density first) are kept.
    """
    mesh = mesh if mesh is not None else make_icosphere(4)
    _check_antipodal(mesh)
    if peak_threshold < 0:
        raise FodkitError("peak_threshold must be non-negative")
    if mask is None:
        mask = Mask.full(vol.dims)
    mask.check_dims(vol.dims)
    X, Y, Z = vol.dims
    coords = np.argwhere(mask.data)
    lin = coords[:, 0] + X * (coords[:, 1] + Y * coords[:, 2])
    coords = coords[np.argsort(lin, kind="stable")]

    B = mesh.basis(vol.lmax)
    w = np.asarray(mesh.vertex_weight)
    nv = mesh.n_vertices
    out_vox, out_dir, out_fd, out_peak = [], [], [], []
    for start in range(0, len(coords), chunk):
        cc = coords[start:start + chunk]
        coef = vol.data[cc[:, 0], cc[:, 1], cc[:, 2]].astype(np.float64)
        amp = np.maximum(coef @ B.T, 0.0)
        labels = segment_lobes(amp, mesh)
        rows, verts = np.nonzero(labels >= 0)
        if len(rows) == 0:
            continue
        key = rows * nv + labels[rows, verts]
        uniq, inv = np.unique(key, return_inverse=True)
        fd = np.bincount(inv, weights=amp[rows, verts] * w[verts], minlength=len(uniq))
        lrow, lvert = uniq // nv, uniq % nv
        peak = amp[lrow, lvert]
        keep = peak >= peak_threshold
        lrow, lvert, fd, peak = lrow[keep], lvert[keep], fd[keep], peak[keep]
        order = np.lexsort((lvert, -fd, lrow))
        lrow, lvert, fd, peak = lrow[order], lvert[order], fd[order], peak[order]
        first = np.searchsorted(lrow, lrow, side="left")
        rank = np.arange(len(lrow)) - first
        keep = rank < max_fixels
        lrow, lvert, fd, peak = lrow[keep], lvert[keep], fd[keep], peak[keep]
        out_vox.append(cc[lrow])
        out_dir.append(canonical_direction(mesh.vertices[lvert]))
        out_fd.append(fd)
        out_peak.append(peak)
    if not out_vox:
        return FixelSet.empty(vol.dims)
    return FixelSet(vol.dims, np.concatenate(out_vox), np.concatenate(out_dir),
                    np.concatenate(out_fd), np.concatenate(out_peak))


# ---------------------------------------------------------------------------
# matching


@dataclass
class MatchResult:
    """Fixel correspondences between a ground-truth and an estimated set.

    All indices refer to positions in the respective :class:`FixelSet`.
    """

    gt_index: np.ndarray
    est_index: np.ndarray
    angular_error_deg: np.ndarray
    missing: np.ndarray
    extra: np.ndarray
    threshold_deg: float

    @property
    def n_matched(self) -> int:
        return len(self.gt_index)


def match_fixels(gt: FixelSet, est: FixelSet,
                 threshold_deg: float = DEFAULT_MATCH_THRESHOLD_DEG) -> MatchResult:
    """Greedy one-to-one matching per voxel in ascending angular error.

    Pairs with error above ``threshold_deg`` are never matched; leftover GT
    fixels are *missing* and leftover estimated fixels are *extra*.
    """
    if gt.dims != est.dims:
        raise ShapeError(f"fixel sets have different dims: {gt.dims} vs {est.dims}")
    est_groups = dict(est.groups())
    gt_groups = dict(gt.groups())
    pg, pe, perr, missing, extra = [], [], [], [], []
    for vox in sorted(set(gt_groups) | set(est_groups)):
        gi = gt_groups.get(vox, np.empty(0, dtype=np.int64))
        ei = est_groups.get(vox, np.empty(0, dtype=np.int64))
        if len(gi) == 0 or len(ei) == 0:
            missing.extend(gi.tolist())
            extra.extend(ei.tolist())
            continue
        err = axial_angle_deg(gt.direction[gi][:, None, :], est.direction[ei][None, :, :])
        a, b = np.meshgrid(np.arange(len(gi)), np.arange(len(ei)), indexing="ij")
        order = np.lexsort((b.ravel(), a.ravel(), err.ravel()))
        used_g = np.zeros(len(gi), dtype=bool)
        used_e = np.zeros(len(ei), dtype=bool)
        for k in order:
            i, j = a.flat[k], b.flat[k]
            e = err.flat[k]
            if e > threshold_deg:
                break
            if used_g[i] or used_e[j]:
                continue
            used_g[i] = used_e[j] = True
            pg.append(gi[i])
            pe.append(ei[j])
            perr.append(e)
        missing.extend(gi[~used_g].tolist())
        extra.extend(ei[~used_e].tolist())
    return MatchResult(np.array(pg, dtype=np.int64), np.array(pe, dtype=np.int64),
                       np.array(perr, dtype=np.float64), np.array(sorted(missing), dtype=np.int64),
                       np.array(sorted(extra), dtype=np.int64), float(threshold_deg))


@dataclass
class FixelMetrics:
    mean_angular_error_deg: float
    peak_error: float
    fd_error: float
    n_matched: int
    n_extra: int
    n_missing: int
    n_voxels: int
    normalized: bool = True

    def to_dict(self):
        return asdict(self)


def fixel_metrics(match: MatchResult, gt: FixelSet, est: FixelSet, roi: Mask,
                  normalized: bool = True) -> FixelMetrics:
    """Angular, peak and fiber-density errors over fixels inside ``roi``.

    Peak and FD errors sum ``|est - gt|`` over matched pairs plus the full
    value of every extra and missing fixel. With ``normalized`` (the
    default) that sum is divided by the number of contributing fixels
    ``n_matched + n_extra + n_missing``. NaN marks an undefined mean.
    """
    if roi.n_voxels == 0:
        raise EmptyRegionError("fixel metrics need a non-empty ROI")
    gt_in = gt.in_mask(roi)
    est_in = est.in_mask(roi)
    pairs = gt_in[match.gt_index] if match.n_matched else np.zeros(0, dtype=bool)
    g, e = match.gt_index[pairs], match.est_index[pairs]
    miss = match.missing[gt_in[match.missing]] if len(match.missing) else match.missing
    ext = match.extra[est_in[match.extra]] if len(match.extra) else match.extra

    def err(attr):
        gv = getattr(gt, attr).astype(np.float64)
        ev = getattr(est, attr).astype(np.float64)
        total = np.sum(np.abs(ev[e] - gv[g])) + np.sum(ev[ext]) + np.sum(gv[miss])
        if not normalized:
            return float(total)
        n = len(g) + len(ext) + len(miss)
        return float(total / n) if n else float("nan")

    mae = float(np.mean(match.angular_error_deg[pairs])) if len(g) else float("nan")
    return FixelMetrics(mae, err("peak"), err("fd"), int(len(g)), int(len(ext)), int(len(miss)),
                        roi.n_voxels, bool(normalized))


def filter_roi_by_fixel_count(roi: Mask, gt: FixelSet, expected: int) -> Mask:
    """Keep only ROI voxels whose ground truth has exactly ``expected`` fixels."""
    if int(expected) < 1:
        raise FodkitError(f"expected fixel count must be >= 1, got {expected}")
    roi.check_dims(gt.dims, "fixel set")
    return Mask(roi.data & (gt.count_map() == int(expected)), roi.voxel_size)
