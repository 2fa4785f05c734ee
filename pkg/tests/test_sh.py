import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import sph_harm_y

from fodkit.errors import FodkitError
from fodkit.sh import (evaluate_amplitude, fit_sh, make_icosphere, normalized_legendre, sh_basis,
                       sh_index, sh_orders, spherical_triangle_area)


def unit_vectors(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def scipy_real_sh(l, m, theta, phi):
    # scipy includes the Condon-Shortley phase; undo it with (-1)^m
    if m == 0:
        return sph_harm_y(l, 0, theta, phi).real
    y = sph_harm_y(l, abs(m), theta, phi) * (-1) ** abs(m)
    return np.sqrt(2) * (y.real if m > 0 else y.imag)


def test_index_layout():
    assert sh_index(0, 0) == 0
    assert sh_index(2, -2) == 1
    assert sh_index(2, 2) == 5
    assert sh_index(8, 8) == 44
    ls, ms = sh_orders(8)
    assert len(ls) == 45
    assert all(sh_index(l, m) == i for i, (l, m) in enumerate(zip(ls, ms)))


def test_basis_matches_scipy(rng):
    d = unit_vectors(rng, 50)
    B = sh_basis(8, d)
    theta = np.arccos(d[:, 2])
    phi = np.arctan2(d[:, 1], d[:, 0])
    ls, ms = sh_orders(8)
    ref = np.stack([scipy_real_sh(l, m, theta, phi) for l, m in zip(ls, ms)], axis=1)
    np.testing.assert_allclose(B, ref, atol=1e-12)


def test_y00_constant(rng):
    B = sh_basis(0, unit_vectors(rng, 10))
    np.testing.assert_allclose(B, 1 / np.sqrt(4 * np.pi), atol=1e-15)


def test_legendre_at_pole():
    P = normalized_legendre(8, np.array([1.0]))
    for l in range(9):
        assert P[l, 0, 0] == pytest.approx(np.sqrt((2 * l + 1) / (4 * np.pi)), abs=1e-14)
        for m in range(1, l + 1):
            assert P[l, m, 0] == 0.0


def test_antipodal_symmetry(rng):
    d = unit_vectors(rng, 30)
    np.testing.assert_allclose(sh_basis(8, d), sh_basis(8, -d), atol=1e-12)


@pytest.mark.parametrize("lmax", [-2, 3, 10])
def test_bad_lmax(lmax):
    with pytest.raises(FodkitError):
        sh_basis(lmax, [[0, 0, 1]])


def test_non_unit_direction_rejected():
    with pytest.raises(FodkitError):
        sh_basis(2, [[0, 0, 2.0]])


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_icosphere_counts(n):
    mesh = make_icosphere(n)
    assert mesh.n_vertices == 10 * 4 ** n + 2
    assert len(mesh.faces) == 20 * 4 ** n
    np.testing.assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-12)
    assert abs(mesh.vertex_weight.sum() - 4 * np.pi) < 1e-9


def test_icosphere_antipode_and_adjacency():
    mesh = make_icosphere(3)
    np.testing.assert_allclose(mesh.vertices[mesh.antipode], -mesh.vertices, atol=1e-12)
    for i, nb in enumerate(mesh.adjacency):
        assert list(nb) == sorted(nb)
        for j in nb:
            assert i in mesh.adjacency[j]
    B = mesh.basis(8)
    assert np.array_equal(B, B[mesh.antipode])


def test_spherical_triangle_octant():
    a, b, c = np.eye(3)[:, None, :]
    assert spherical_triangle_area(a, b, c)[0] == pytest.approx(np.pi / 2, abs=1e-14)


def test_orthonormality_subdiv5():
    mesh = make_icosphere(5)
    B = mesh.basis(8)
    G = B.T @ (B * mesh.vertex_weight[:, None])
    assert np.max(np.abs(G - np.eye(45))) < 1e-3


def test_fit_roundtrip(rng):
    mesh = make_icosphere(3)
    c = rng.normal(size=45)
    amp = evaluate_amplitude(c, mesh)
    np.testing.assert_allclose(fit_sh(amp, mesh.vertices, 8), c, atol=1e-9)


def test_evaluate_shape_mismatch():
    with pytest.raises(Exception):
        evaluate_amplitude(np.zeros(7), make_icosphere(1))


@given(st.integers(0, 2 ** 32 - 1))
def test_rotation_about_z_preserves_band_power(seed):
    # a z-rotation mixes only m and -m within each band, so per-band power is preserved
    rng = np.random.default_rng(seed)
    c = rng.normal(size=45)
    d = unit_vectors(rng, 400)
    a = rng.uniform(0, 2 * np.pi)
    R = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    f_rot = sh_basis(8, d @ R) @ c
    c_rot = np.linalg.lstsq(sh_basis(8, d), f_rot, rcond=None)[0]
    ls, _ = sh_orders(8)
    for l in range(0, 9, 2):
        assert np.sum(c[ls == l] ** 2) == pytest.approx(np.sum(c_rot[ls == l] ** 2), rel=1e-8)
