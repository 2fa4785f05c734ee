"""Core data containers shared by every fodkit module.

Arrays are stored with spatial axes first, so an ``SHVolume`` with dims
``(X, Y, Z)`` and ``ncoef`` coefficients holds ``data.shape == (X, Y, Z, ncoef)``.
Serialised in Fortran order this gives the on-disk linear index
``x + X*(y + Y*(z + Z*c))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FormatError, ShapeError

VALID_NCOEF = (1, 6, 15, 28, 45)


def ncoef_for_lmax(lmax: int) -> int:
    return (lmax + 1) * (lmax + 2) // 2


def lmax_for_ncoef(ncoef: int) -> int:
    for lmax in range(0, 9, 2):
        if ncoef_for_lmax(lmax) == ncoef:
            return lmax
    raise FormatError(f"ncoef {ncoef} does not correspond to an even lmax <= 8")


def default_affine(voxel_size: Sequence[float]) -> np.ndarray:
    aff = np.eye(4)
    aff[0, 0], aff[1, 1], aff[2, 2] = voxel_size
    return aff


@dataclass
class SHVolume:
    """4D grid of real even-order SH coefficients.

    ``data`` has shape ``(X, Y, Z, ncoef)``. A plain scalar image is an
    ``SHVolume`` with ``ncoef == 1``.
    """

    data: np.ndarray
    voxel_size: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[..., None]
        if data.ndim != 4:
            raise ShapeError(f"SH volume data must be 4D, got shape {data.shape}")
        if data.shape[3] not in VALID_NCOEF:
            raise FormatError(f"ncoef must be one of {VALID_NCOEF}, got {data.shape[3]}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise FormatError("volume contains non-finite values")
        self.data = data
        self.voxel_size = tuple(float(v) for v in self.voxel_size)
        if self.affine is None:
            self.affine = default_affine(self.voxel_size)
        else:
            self.affine = np.asarray(self.affine, dtype=np.float64).reshape(4, 4)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape[:3])

    @property
    def ncoef(self) -> int:
        return int(self.data.shape[3])

    @property
    def lmax(self) -> int:
        return lmax_for_ncoef(self.ncoef)

    def with_data(self, data: np.ndarray) -> "SHVolume":
        return SHVolume(data, self.voxel_size, self.affine.copy())


@dataclass
class Mask:
    data: np.ndarray
    voxel_size: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 4 and data.shape[3] == 1:
            data = data[..., 0]
        if data.ndim != 3:
            raise ShapeError(f"mask must be 3D, got shape {data.shape}")
        self.data = data.astype(bool)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def n_voxels(self) -> int:
        return int(self.data.sum())

    @classmethod
    def full(cls, dims) -> "Mask":
        return cls(np.ones(tuple(dims), dtype=bool))

    def check_dims(self, dims, what="volume"):
        if tuple(dims) != self.dims:
            raise ShapeError(f"mask dims {self.dims} do not match {what} dims {tuple(dims)}")


@dataclass
class GradientTable:
    """Diffusion directions and b-values, grouped into shells.

    Shells are keyed by the b-value rounded to the nearest multiple of
    ``shell_tolerance``; rows with ``bvalue < b0_threshold`` form shell 0.
    """

    directions: np.ndarray
    bvalues: np.ndarray
    b0_threshold: float = 50.0
    shell_tolerance: float = 100.0
    source_format: str = "fsl"

    def __post_init__(self):
        dirs = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
        bvals = np.asarray(self.bvalues, dtype=np.float64).reshape(-1)
        if len(dirs) != len(bvals):
            raise ShapeError(f"{len(dirs)} directions but {len(bvals)} b-values")
        dirs = dirs.copy()
        b0 = bvals < self.b0_threshold
        norms = np.linalg.norm(dirs, axis=1)
        weighted = ~b0
        if np.any(norms[weighted] == 0):
            raise FormatError("zero direction vector on a diffusion-weighted row")
        dirs[weighted] /= norms[weighted, None]
        self.directions = dirs
        self.bvalues = bvals

    def __len__(self):
        return len(self.bvalues)

    def shell_keys(self) -> np.ndarray:
        keys = np.round(self.bvalues / self.shell_tolerance) * self.shell_tolerance
        keys[self.bvalues < self.b0_threshold] = 0.0
        return keys

    @property
    def shells(self) -> Dict[float, np.ndarray]:
        keys = self.shell_keys()
        return {float(k): np.flatnonzero(keys == k) for k in np.unique(keys)}

    def shell_bvalues(self) -> Dict[float, float]:
        """Average b-value of each shell, keyed like :attr:`shells`."""
        return {k: float(self.bvalues[idx].mean()) for k, idx in self.shells.items()}

    def b0_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bvalues < self.b0_threshold)

    def subset(self, rows) -> "GradientTable":
        rows = np.asarray(rows, dtype=int)
        return GradientTable(self.directions[rows], self.bvalues[rows],
                             self.b0_threshold, self.shell_tolerance, self.source_format)


@dataclass
class ConnMatrix:
    weights: np.ndarray
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ShapeError(f"connectivity matrix is non-square: shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise FormatError("connectivity matrix contains non-finite values")
        if np.any(w < 0):
            raise FormatError("connectivity matrix contains negative weights")
        if not np.array_equal(w, w.T):
            raise ShapeError("connectivity matrix is not symmetric")
        w = w.copy()
        np.fill_diagonal(w, 0.0)
        self.weights = w
        if not self.labels:
            from .volume_io import default_labels
            self.labels = default_labels(len(w))
        if len(self.labels) != len(w):
            raise ShapeError(f"{len(self.labels)} labels for {len(w)} nodes")
        self.labels = [str(s) for s in self.labels]

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    def upper_triangle(self) -> np.ndarray:
        return self.weights[np.triu_indices(self.n_nodes, 1)]


@dataclass
class FixelSet:
    """Per-voxel fiber populations stored as flat arrays.

    Fixels are sorted by voxel linear index (x fastest) and, within a
    voxel, by descending ``fd``. ``voxel`` holds integer ``(x, y, z)``
    coordinates; ``direction``, ``fd`` and ``peak`` are float32 so that
    the fixel file round-trips bit-exactly.
    """

    dims: Tuple[int, int, int]
    voxel: np.ndarray
    direction: np.ndarray
    fd: np.ndarray
    peak: np.ndarray

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.voxel = np.asarray(self.voxel, dtype=np.uint32).reshape(-1, 3)
        self.direction = np.asarray(self.direction, dtype=np.float32).reshape(-1, 3)
        self.fd = np.asarray(self.fd, dtype=np.float32).reshape(-1)
        self.peak = np.asarray(self.peak, dtype=np.float32).reshape(-1)
        n = len(self.voxel)
        if not (len(self.direction) == len(self.fd) == len(self.peak) == n):
            raise ShapeError("fixel arrays have inconsistent lengths")
        if n and np.any(self.voxel >= np.array(self.dims, dtype=np.uint32)):
            raise ShapeError("fixel voxel index outside volume dims")

    @classmethod
    def empty(cls, dims) -> "FixelSet":
        return cls(dims, np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))

    def __len__(self):
        return len(self.fd)

    def linear_index(self) -> np.ndarray:
        X, Y, _ = self.dims
        v = self.voxel.astype(np.int64)
        return v[:, 0] + X * (v[:, 1] + Y * v[:, 2])

    def count_map(self) -> np.ndarray:
        counts = np.bincount(self.linear_index(), minlength=int(np.prod(self.dims)))
        return counts.reshape(self.dims, order="F")

    def groups(self):
        """Yield ``(linear_voxel_index, fixel_indices)`` for each occupied voxel."""
        lin = self.linear_index()
        if len(lin) == 0:
            return
        order = np.argsort(lin, kind="stable")
        lin = lin[order]
        starts = np.flatnonzero(np.r_[True, lin[1:] != lin[:-1]])
        ends = np.r_[starts[1:], len(lin)]
        for s, e in zip(starts, ends):
            yield int(lin[s]), order[s:e]

    def in_mask(self, mask: "Mask") -> np.ndarray:
        """Boolean per fixel: does its voxel lie inside ``mask``."""
        mask.check_dims(self.dims, "fixel set")
        v = self.voxel.astype(np.int64)
        return mask.data[v[:, 0], v[:, 1], v[:, 2]]
