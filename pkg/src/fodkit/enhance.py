"""Patch-wise FOD enhancement around a pluggable enhancer.

The pipeline standardizes each SH coefficient over the mask, cuts the
volume into overlapping 64-voxel cubes at stride 32, runs the enhancer on
every cube, averages overlapping predictions voxel by voxel, undoes the
standardization and finally restores the original values outside the mask.

An enhancer is any callable mapping a standardized ``(64, 64, 64, ncoef)``
array to an array of the same shape.
"""
from __future__ import annotations

import itertools
import json
import logging
import os
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyRegionError, FodkitError, FormatError, ShapeError
from .types import Mask, SHVolume

log = logging.getLogger(__name__)

PATCH_SIZE = 64
STRIDE = 32
STD_FLOOR = 1e-8
RIDGE = 1e-8

Enhancer = Callable[[np.ndarray], np.ndarray]


@dataclass
class CoeffStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64).ravel(), STD_FLOOR)
        if self.mean.shape != self.std.shape:
            raise ShapeError(f"stats mean has {len(self.mean)} entries, std has {len(self.std)}")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.std))):
            raise FormatError("coefficient statistics must be finite")

    @property
    def ncoef(self) -> int:
        return len(self.mean)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "CoeffStats":
        return cls(d["mean"], d["std"])


def compute_stats(vol: SHVolume, mask: Mask) -> CoeffStats:
    """Per-coefficient mean and standard deviation over masked voxels."""
    mask.check_dims(vol.dims)
    if mask.n_voxels == 0:
        raise EmptyRegionError("cannot compute coefficient statistics over an empty mask")
    x = vol.data[mask.data].astype(np.float64)
    return CoeffStats(x.mean(axis=0), x.std(axis=0))


def _check_stats(vol: SHVolume, stats: CoeffStats):
    if vol.ncoef != stats.ncoef:
        raise ShapeError(f"volume has {vol.ncoef} coefficients, stats have {stats.ncoef}")


def standardize(vol: SHVolume, stats: CoeffStats) -> SHVolume:
    _check_stats(vol, stats)
    return vol.with_data((vol.data.astype(np.float64) - stats.mean) / stats.std)


def rescale(vol: SHVolume, stats: CoeffStats) -> SHVolume:
    _check_stats(vol, stats)
    return vol.with_data(vol.data.astype(np.float64) * stats.std + stats.mean)


# ---------------------------------------------------------------------------
# patch planning


@dataclass
class PatchGrid:
    dims: Tuple[int, int, int]
    padded_dims: Tuple[int, int, int]
    offsets: List[Tuple[int, int, int]]
    patch_size: int = PATCH_SIZE
    stride: int = STRIDE

    def __len__(self):
        return len(self.offsets)

    def slices(self, offset) -> Tuple[slice, slice, slice]:
        return tuple(slice(o, o + self.patch_size) for o in offset)


def _axis_offsets(size: int, lo: int, hi: int, patch: int, stride: int) -> List[int]:
    last = size - patch
    start = min(lo, last)
    offsets = []
    o = start
    while True:
        offsets.append(min(o, last))
        if o + patch >= hi or o >= last:
            break
        o += stride
    return sorted(set(offsets))


def plan_patches(dims, mask: Optional[Mask] = None, patch_size: int = PATCH_SIZE,
                 stride: int = STRIDE) -> PatchGrid:
    """Sliding-window offsets over the mask bounding box.

    Axes shorter than ``patch_size`` are treated as zero-padded up to it.
    The last offset on each axis is clamped to ``size - patch_size`` so
    the far boundary is covered. Patches containing no masked voxel are
    dropped.
    """
    dims = tuple(int(d) for d in dims)
    padded = tuple(max(d, patch_size) for d in dims)
    if mask is None:
        mask = Mask.full(dims)
    mask.check_dims(dims)
    if mask.n_voxels == 0:
        return PatchGrid(dims, padded, [], patch_size, stride)
    idx = np.nonzero(mask.data)
    lo = [int(i.min()) for i in idx]
    hi = [int(i.max()) + 1 for i in idx]
    per_axis = [_axis_offsets(padded[a], lo[a], hi[a], patch_size, stride) for a in range(3)]
    offsets = []
    for off in itertools.product(*per_axis):
        sl = tuple(slice(o, min(o + patch_size, d)) for o, d in zip(off, dims))
        if mask.data[sl].any():
            offsets.append(tuple(int(o) for o in off))
    return PatchGrid(dims, padded, offsets, patch_size, stride)


# ---------------------------------------------------------------------------
# enhancers


class IdentityEnhancer:
    def __call__(self, patch: np.ndarray) -> np.ndarray:
        return patch


class LinearEnhancer:
    """Per-voxel affine map ``y = W x + b`` in standardized space."""

    def __init__(self, W, b, stats: Optional[CoeffStats] = None):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64).ravel()
        n = len(self.b)
        if self.W.shape != (n, n):
            raise ShapeError(f"W must be {n}x{n}, got {self.W.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise FormatError("linear enhancer parameters must be finite")
        if stats is not None and stats.ncoef != n:
            raise ShapeError(f"stats have {stats.ncoef} coefficients, model has {n}")
        self.stats = stats

    @property
    def ncoef(self) -> int:
        return len(self.b)

    def __call__(self, patch: np.ndarray) -> np.ndarray:
        if patch.shape[-1] != self.ncoef:
            raise ShapeError(f"patch has {patch.shape[-1]} coefficients, model expects {self.ncoef}")
        return patch @ self.W.T + self.b

    def to_dict(self):
        d = {"ncoef": self.ncoef, "W": self.W.ravel().tolist(), "b": self.b.tolist()}
        if self.stats is not None:
            d["stats"] = self.stats.to_dict()
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d) -> "LinearEnhancer":
        try:
            b = np.asarray(d["b"], dtype=np.float64)
            W = np.asarray(d["W"], dtype=np.float64).reshape(len(b), len(b))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"malformed linear model: {exc}") from exc
        stats = CoeffStats.from_dict(d["stats"]) if d.get("stats") else None
        return cls(W, b, stats)

    @classmethod
    def load(cls, path) -> "LinearEnhancer":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: malformed JSON ({exc})") from exc
        return cls.from_dict(d)


class ExternalEnhancer:
    """Runs an external program once per patch.

    The program is called as ``<command> <patch_in> <patch_out>``; both
    files use the native volume format and hold standardized coefficients.
    """

    def __init__(self, command: str, timeout: Optional[float] = None):
        self.argv = shlex.split(command)
        if not self.argv:
            raise FodkitError("empty enhancer command")
        self.timeout = timeout

    def __call__(self, patch: np.ndarray) -> np.ndarray:
        from .volume_io import read_native_volume, write_native_volume

        with tempfile.TemporaryDirectory(prefix="fodkit-patch-") as tmp:
            src = os.path.join(tmp, "in.fvf")
            dst = os.path.join(tmp, "out.fvf")
            write_native_volume(SHVolume(patch.astype(np.float32)), src)
            proc = subprocess.run(self.argv + [src, dst], capture_output=True, text=True,
                                  timeout=self.timeout)
            if proc.returncode != 0:
                msg = proc.stderr.strip().splitlines()[-1] if proc.stderr.strip() else ""
                raise FodkitError(f"enhancer command exited with {proc.returncode}: {msg}")
            if not os.path.exists(dst):
                raise FodkitError("enhancer command did not write an output patch")
            return read_native_volume(dst).data


def enhancer_from_spec(spec: str) -> Enhancer:
    """Build an enhancer from ``identity``, ``linear:<model.json>`` or ``exec:<command>``."""
    if spec == "identity":
        return IdentityEnhancer()
    if spec.startswith("linear:"):
        return LinearEnhancer.load(spec[len("linear:"):])
    if spec.startswith("exec:"):
        return ExternalEnhancer(spec[len("exec:"):])
    raise FodkitError(f"unknown enhancer {spec!r}; expected identity, linear:<model.json> or exec:<command>")


# ---------------------------------------------------------------------------
# pipeline


def enhance(vol: SHVolume, mask: Mask, stats: Optional[CoeffStats], enhancer: Enhancer,
            threads: int = 1, grid: Optional[PatchGrid] = None) -> SHVolume:
    """Run ``enhancer`` over the volume patch by patch.

    Overlapping predictions are averaged with equal weight. Predictions are
    accumulated in patch-offset order whatever the thread count, so the
    result does not depend on ``threads``.
    """
    mask.check_dims(vol.dims)
    if mask.n_voxels == 0:
        raise EmptyRegionError("enhancement mask is empty")
    if stats is None:
        stats = compute_stats(vol, mask)
    std = standardize(vol, stats).data
    dims, C = vol.dims, vol.ncoef
    if grid is None:
        grid = plan_patches(dims, mask)
    padded = grid.padded_dims
    if padded != dims:
        buf = np.zeros(padded + (C,), dtype=np.float64)
        buf[:dims[0], :dims[1], :dims[2]] = std
        std = buf
    acc = np.zeros(padded + (C,), dtype=np.float64)
    count = np.zeros(padded, dtype=np.int32)
    p = grid.patch_size

    def run(offset):
        patch = np.ascontiguousarray(std[grid.slices(offset)])
        out = np.asarray(enhancer(patch), dtype=np.float64)
        if out.shape != (p, p, p, C):
            raise ShapeError(f"enhancer returned shape {out.shape}, expected {(p, p, p, C)}")
        return out

    threads = max(1, int(threads))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, len(grid.offsets), threads):
            batch = grid.offsets[start:start + threads]
            for offset, out in zip(batch, pool.map(run, batch)):
                sl = grid.slices(offset)
                acc[sl] += out
                count[sl] += 1
    log.debug("enhanced %d patches", len(grid.offsets))

    acc = acc[:dims[0], :dims[1], :dims[2]]
    count = count[:dims[0], :dims[1], :dims[2]]
    m = mask.data
    if np.any(count[m] == 0):
        raise AssertionError("patch grid left masked voxels uncovered")
    pred = acc[m] / count[m][:, None]
    pred = pred * stats.std + stats.mean
    out = vol.data.copy()
    out[m] = pred.astype(out.dtype)
    return vol.with_data(out)


def fit_linear_enhancer(lq: SHVolume, gt: SHVolume, mask: Mask,
                        ridge: float = RIDGE) -> LinearEnhancer:
    """Least-squares ``W``, ``b`` mapping standardized lq voxels to gt voxels.

    Both volumes are standardized with the lq statistics, so the fitted
    model composes directly with :func:`enhance`, which rescales with the
    statistics of its input.
    """
    if lq.dims != gt.dims or lq.ncoef != gt.ncoef:
        raise ShapeError(f"lq {lq.data.shape} and gt {gt.data.shape} differ")
    mask.check_dims(lq.dims)
    C = lq.ncoef
    n = mask.n_voxels
    if n < C + 1:
        raise FodkitError(f"need at least {C + 1} masked voxels to fit {C} coefficients, got {n}")
    stats = compute_stats(lq, mask)
    x = (lq.data[mask.data].astype(np.float64) - stats.mean) / stats.std
    y = (gt.data[mask.data].astype(np.float64) - stats.mean) / stats.std
    X = np.hstack([x, np.ones((n, 1))])
    A = X.T @ X + ridge * np.eye(C + 1)
    beta = np.linalg.solve(A, X.T @ y)
    return LinearEnhancer(beta[:C].T, beta[C], stats)


def patch_coverage(grid: PatchGrid) -> np.ndarray:
    """Number of patches covering each voxel of the unpadded grid."""
    count = np.zeros(grid.padded_dims, dtype=np.int32)
    for off in grid.offsets:
        count[grid.slices(off)] += 1
    d = grid.dims
    return count[:d[0], :d[1], :d[2]]


__all__: Sequence[str] = (
    "CoeffStats", "compute_stats", "standardize", "rescale", "PatchGrid", "plan_patches",
    "IdentityEnhancer", "LinearEnhancer", "ExternalEnhancer", "enhancer_from_spec",
    "enhance", "fit_linear_enhancer", "patch_coverage",
)
