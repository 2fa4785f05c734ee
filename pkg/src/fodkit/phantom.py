"""Synthetic FODs for testing and demos.

A single fiber is modelled as the axially symmetric lobe
``exp(-kappa * sin^2(angle))`` around its axis, band-limited to ``lmax``
through the Funk-Hecke theorem. Crossings are sums of single fibers.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

from .sh import normalized_legendre, sh_basis, sh_index
from .types import SHVolume, ncoef_for_lmax


def zonal_profile(kappa: float, lmax: int = 8, n_quad: int = 200) -> np.ndarray:
    """``2*pi * int f(t) P_l(t) dt`` for even ``l`` up to ``lmax``."""
    t, wq = leggauss(n_quad)
    f = np.exp(kappa * (t * t - 1.0))
    P = normalized_legendre(lmax, t)[:, 0]  # N_l^0 P_l(t) = sqrt((2l+1)/4pi) P_l(t)
    out = np.zeros(lmax + 1)
    for l in range(0, lmax + 1, 2):
        Pl = P[l] / np.sqrt((2 * l + 1) / (4 * np.pi))
        out[l] = 2 * np.pi * np.sum(wq * f * Pl)
    return out


def fiber_coeffs(direction, kappa: float = 8.0, peak: float = 1.0, lmax: int = 8) -> np.ndarray:
    """SH coefficients of one fiber lobe whose amplitude along ``direction`` is ``peak``."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    prof = zonal_profile(kappa, lmax)
    Y = sh_basis(lmax, d[None, :])[0]
    c = np.zeros(ncoef_for_lmax(lmax))
    for l in range(0, lmax + 1, 2):
        for m in range(-l, l + 1):
            c[sh_index(l, m)] = prof[l] * Y[sh_index(l, m)]
    amp = float(Y @ c)
    return c * (peak / amp)


def crossing_coeffs(directions, kappa: float = 8.0, peaks=None, lmax: int = 8) -> np.ndarray:
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    if peaks is None:
        peaks = np.ones(len(directions))
    return sum(fiber_coeffs(d, kappa, p, lmax) for d, p in zip(directions, peaks))


def in_plane(angles_deg) -> np.ndarray:
    """Unit vectors in the x-z plane at the given angles from ``z``."""
    a = np.radians(np.asarray(angles_deg, dtype=np.float64))
    return np.stack([np.sin(a), np.zeros_like(a), np.cos(a)], axis=1)


def phantom_volume(dims, coeffs, voxel_size=(1.0, 1.0, 1.0)) -> SHVolume:
    """Volume with the same coefficient vector in every voxel."""
    c = np.asarray(coeffs, dtype=np.float32)
    data = np.broadcast_to(c, tuple(dims) + (len(c),)).copy()
    return SHVolume(data, voxel_size)
