"""Real symmetric spherical harmonics (even orders up to 8) and sphere meshes.

Coefficient ordering follows MRtrix: for each even ``l`` the ``2l+1``
terms run ``m = -l .. l``, so the flat index is ``l*(l+1)/2 + m``. The
real basis is built from fully normalised associated Legendre functions
without the Condon-Shortley phase::

    m = 0:  N_l^0 P_l^0(cos t)
    m > 0:  sqrt(2) N_l^m P_l^m(cos t) cos(m p)
    m < 0:  sqrt(2) N_l^|m| P_l^|m|(cos t) sin(|m| p)

which is orthonormal over the unit sphere.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .errors import FodkitError, ShapeError
from .types import lmax_for_ncoef, ncoef_for_lmax

MAX_LMAX = 8


def _check_lmax(lmax: int) -> int:
    lmax = int(lmax)
    if lmax < 0 or lmax % 2 or lmax > MAX_LMAX:
        raise FodkitError(f"lmax must be an even integer in [0, {MAX_LMAX}], got {lmax}")
    return lmax


def sh_index(l: int, m: int) -> int:
    return l * (l + 1) // 2 + m


def sh_orders(lmax: int) -> Tuple[np.ndarray, np.ndarray]:
    """Arrays of ``(l, m)`` for every coefficient up to ``lmax``."""
    ls, ms = [], []
    for l in range(0, _check_lmax(lmax) + 1, 2):
        for m in range(-l, l + 1):
            ls.append(l)
            ms.append(m)
    return np.array(ls), np.array(ms)


def normalized_legendre(lmax: int, x: np.ndarray) -> np.ndarray:
    """Fully normalised associated Legendre values ``N_l^m P_l^m(x)``.

    Returns an array of shape ``(lmax+1, lmax+1, len(x))`` indexed ``[l, m]``
    (zero for ``m > l``). Uses the standard upward recurrence on the
    normalised functions, which stays bounded for all orders.
    """
    x = np.asarray(x, dtype=np.float64)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((lmax + 1, lmax + 1) + x.shape)
    P[0, 0] = 1.0 / np.sqrt(4.0 * np.pi)
    for m in range(1, lmax + 1):
        P[m, m] = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * P[m - 1, m - 1]
    for m in range(0, lmax):
        P[m + 1, m] = np.sqrt(2.0 * m + 3.0) * x * P[m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[l, m] = a * (x * P[l - 1, m] - b * P[l - 2, m])
    return P


def sh_basis(lmax: int, directions, unit_tol: float = 1e-6) -> np.ndarray:
    """Basis matrix ``B[i, j] = Y_j(directions[i])``.

    Parameters
    ----------
    lmax : int
        Even maximum order, at most 8.
    directions : array_like, shape (n, 3)
        Unit vectors.

    Returns
    -------
    B : ndarray, shape (n, (lmax+1)(lmax+2)/2)
    """
    lmax = _check_lmax(lmax)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    norms = np.linalg.norm(d, axis=1)
    if np.any(np.abs(norms - 1.0) > unit_tol):
        raise FodkitError("sh_basis requires unit direction vectors")
    z = np.clip(d[:, 2], -1.0, 1.0)
    phi = np.arctan2(d[:, 1], d[:, 0])
    P = normalized_legendre(lmax, z)
    B = np.empty((len(d), ncoef_for_lmax(lmax)))
    root2 = np.sqrt(2.0)
    for l in range(0, lmax + 1, 2):
        B[:, sh_index(l, 0)] = P[l, 0]
        for m in range(1, l + 1):
            B[:, sh_index(l, m)] = root2 * P[l, m] * np.cos(m * phi)
            B[:, sh_index(l, -m)] = root2 * P[l, m] * np.sin(m * phi)
    return B


# ---------------------------------------------------------------------------
# sphere meshes


@dataclass(frozen=True, eq=False)
class SphereMesh:
    """Triangulated unit sphere with per-vertex solid-angle weights."""

    vertices: np.ndarray
    faces: np.ndarray
    vertex_weight: np.ndarray
    adjacency: Tuple[Tuple[int, ...], ...]
    antipode: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def neighbor_array(self) -> np.ndarray:
        """Neighbour indices padded with ``n_vertices``, rows sorted ascending."""
        width = max(len(a) for a in self.adjacency)
        out = np.full((self.n_vertices, width), self.n_vertices, dtype=np.int64)
        for i, nb in enumerate(self.adjacency):
            out[i, :len(nb)] = nb
        return out

    def basis(self, lmax: int) -> np.ndarray:
        """SH basis on the vertices, with antipodal rows made bit-identical."""
        return _mesh_basis(self, int(lmax))

    def to_obj(self, path) -> None:
        with open(path, "w") as f:
            for v in self.vertices:
                f.write(f"v {v[0]:.9f} {v[1]:.9f} {v[2]:.9f}\n")
            for a, b, c in self.faces:
                f.write(f"f {a + 1} {b + 1} {c + 1}\n")


@lru_cache(maxsize=32)
def _mesh_basis(mesh: SphereMesh, lmax: int) -> np.ndarray:
    B = sh_basis(lmax, mesh.vertices)
    B = B[np.minimum(np.arange(mesh.n_vertices), mesh.antipode)]
    B.setflags(write=False)
    return B


_ICOSA_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def _icosahedron():
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    return verts, np.array(_ICOSA_FACES, dtype=np.int64)


def _subdivide(verts, faces):
    verts = list(verts)
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            p = verts[a] + verts[b]
            verts.append(p / np.linalg.norm(p))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return np.array(verts), np.array(out, dtype=np.int64)


def spherical_triangle_area(a, b, c) -> np.ndarray:
    """Solid angle of spherical triangles (Van Oosterom-Strackee formula)."""
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def _antipode_map(verts: np.ndarray) -> np.ndarray:
    key = {tuple(np.round(v, 9) + 0.0): i for i, v in enumerate(verts)}
    anti = np.empty(len(verts), dtype=np.int64)
    for i, v in enumerate(verts):
        j = key.get(tuple(np.round(-v, 9) + 0.0))
        if j is None:
            raise FodkitError("mesh is not antipodally symmetric")
        anti[i] = j
    return anti


@lru_cache(maxsize=8)
def make_icosphere(subdivisions: int = 4) -> SphereMesh:
    """Icosahedron subdivided ``subdivisions`` times (``10*4**n + 2`` vertices)."""
    if not 0 <= int(subdivisions) <= 6:
        raise FodkitError(f"subdivisions must be in [0, 6], got {subdivisions}")
    verts, faces = _icosahedron()
    for _ in range(int(subdivisions)):
        verts, faces = _subdivide(verts, faces)
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)

    area = spherical_triangle_area(verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]])
    weight = np.zeros(len(verts))
    for k in range(3):
        np.add.at(weight, faces[:, k], area / 3.0)

    nbrs: List[set] = [set() for _ in range(len(verts))]
    for a, b, c in faces:
        nbrs[a] |= {b, c}
        nbrs[b] |= {a, c}
        nbrs[c] |= {a, b}
    adjacency = tuple(tuple(sorted(s)) for s in nbrs)

    verts.setflags(write=False)
    faces.setflags(write=False)
    weight.setflags(write=False)
    anti = _antipode_map(verts)
    anti.setflags(write=False)
    return SphereMesh(verts, faces, weight, adjacency, anti)


def evaluate_amplitude(coeffs, mesh: SphereMesh, lmax: int = None) -> np.ndarray:
    """FOD amplitude at every mesh vertex.

    ``coeffs`` may be a single coefficient vector or an ``(..., ncoef)``
    stack; the result has shape ``(..., n_vertices)``.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    inferred = lmax_for_ncoef(c.shape[-1])
    if lmax is not None and int(lmax) != inferred:
        raise ShapeError(f"coefficients have lmax {inferred}, expected {lmax}")
    return c @ mesh.basis(inferred).T


def fit_sh(amplitudes, directions, lmax: int, weights=None) -> np.ndarray:
    """Least-squares SH coefficients for sampled amplitudes (optionally weighted)."""
    B = sh_basis(lmax, directions)
    a = np.asarray(amplitudes, dtype=np.float64)
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=np.float64))
        B = B * sw[:, None]
        a = a * sw.reshape((-1,) + (1,) * (a.ndim - 1))
    coef, *_ = np.linalg.lstsq(B, a, rcond=None)
    return coef
