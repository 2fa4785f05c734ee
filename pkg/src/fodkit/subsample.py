"""Kennard-Stone selection of uniformly spread gradient directions.

Used to emulate a single-shell low angular resolution acquisition from a
multi-shell table: keep every b0 row plus ``k`` well-spread directions of
one shell.
"""
from __future__ import annotations

from typing import List

import numpy as np

from .errors import FodkitError
from .types import GradientTable


def axial_distance(directions) -> np.ndarray:
    """Pairwise angle ``arccos(|u.v|)`` between axes, in radians."""
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    cos = np.clip(np.abs(d @ d.T), 0.0, 1.0)
    D = np.arccos(cos)
    np.fill_diagonal(D, 0.0)
    return D


def kennard_stone(directions, k: int) -> List[int]:
    """Indices chosen by Kennard-Stone max-min selection.

    The first two picks are the most distant pair; each further pick is the
    candidate whose nearest selected direction is farthest away. Ties go to
    the lowest index. Indices are returned in selection order.
    """
    D = axial_distance(directions)
    n = len(D)
    k = int(k)
    if k < 2:
        raise FodkitError(f"k must be at least 2, got {k}")
    if k > n:
        raise FodkitError(f"k = {k} exceeds the number of directions ({n})")

    iu, ju = np.triu_indices(n, 1)
    best = int(np.argmax(D[iu, ju]))  # first maximum in row-major order
    selected = [int(iu[best]), int(ju[best])]
    remaining = np.ones(n, dtype=bool)
    remaining[selected] = False
    nearest = np.minimum(D[selected[0]], D[selected[1]])
    while len(selected) < k:
        cand = np.where(remaining, nearest, -np.inf)
        pick = int(np.argmax(cand))
        selected.append(pick)
        remaining[pick] = False
        nearest = np.minimum(nearest, D[pick])
    return selected


def subsample_acquisition(table: GradientTable, target_shell_b: float, k: int) -> GradientTable:
    """All b0 rows plus ``k`` Kennard-Stone rows of one shell, in original order.

    All b0 volumes are kept; only the diffusion-weighted shell is thinned.
    """
    return table.subset(subsample_rows(table, target_shell_b, k))


def subsample_rows(table: GradientTable, target_shell_b: float, k: int) -> np.ndarray:
    """Row indices kept by :func:`subsample_acquisition`, ascending."""
    if int(k) < 2:
        raise FodkitError(f"k must be at least 2, got {k}")
    keys = table.shell_keys()
    target = np.round(float(target_shell_b) / table.shell_tolerance) * table.shell_tolerance
    if target == 0 or not np.any(keys == target):
        available = sorted(float(s) for s in np.unique(keys) if s > 0)
        raise FodkitError(f"no shell at b={target_shell_b:g}; available shells: {available}")
    shell_rows = np.flatnonzero(keys == target)
    if int(k) > len(shell_rows):
        raise FodkitError(f"k = {k} exceeds shell size {len(shell_rows)} at b={target:g}")
    picked = shell_rows[kennard_stone(table.directions[shell_rows], k)]
    return np.sort(np.concatenate([table.b0_indices(), picked]))
