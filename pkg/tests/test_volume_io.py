import gzip
import json
import logging
import os
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fodkit.errors import FormatError, ShapeError
from fodkit.types import ConnMatrix, FixelSet, GradientTable, Mask, SHVolume
from fodkit.volume_io import (connmatrix_from_array, default_labels, import_nifti, load_volume,
                              read_connmatrix, read_fixels, read_fsl_gradients, read_gradients,
                              read_mask, read_mrtrix_gradients, read_native_volume,
                              write_connmatrix, write_fixels, write_fsl_gradients, write_mask,
                              write_mrtrix_gradients, write_native_volume)


def random_volume(rng, dims=(3, 4, 5), ncoef=15):
    return SHVolume(rng.normal(size=dims + (ncoef,)).astype(np.float32), (1.25, 1.5, 2.0))


def random_fixels(rng, dims=(4, 3, 2), n=17):
    vox = np.stack([rng.integers(0, d, n) for d in dims], axis=1)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return FixelSet(dims, vox, d, rng.random(n), rng.random(n))


# ---------------------------------------------------------------------------
# native volume


def test_volume_roundtrip_bit_exact(tmp_path, rng):
    vol = random_volume(rng)
    p = tmp_path / "v.fvf"
    write_native_volume(vol, p)
    back = read_native_volume(p)
    assert back.data.dtype == np.float32
    assert back.data.tobytes() == vol.data.tobytes()
    assert back.voxel_size == vol.voxel_size
    np.testing.assert_array_equal(back.affine, vol.affine)


def test_volume_header_layout(tmp_path, rng):
    vol = random_volume(rng, (2, 3, 4), 6)
    p = tmp_path / "v.fvf"
    write_native_volume(vol, p)
    raw = p.read_bytes()
    (hlen,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4:4 + hlen])
    assert header["dims"] == [2, 3, 4, 6]
    assert header["dtype"] == "f32le"
    assert len(header["affine"]) == 16
    payload = np.frombuffer(raw[4 + hlen:], dtype="<f4")
    # x varies fastest, coefficient slowest
    assert payload[0] == vol.data[0, 0, 0, 0]
    assert payload[1] == vol.data[1, 0, 0, 0]
    assert payload[2 * 3 * 4] == vol.data[0, 0, 0, 1]


def _write_raw(path, header, payload):
    head = json.dumps(header).encode()
    path.write_bytes(struct.pack("<I", len(head)) + head + payload)


def test_volume_payload_length_mismatch(tmp_path):
    p = tmp_path / "bad.fvf"
    _write_raw(p, {"dims": [2, 2, 2, 1], "voxel_size": [1, 1, 1], "dtype": "f32le"}, b"\0" * 28)
    with pytest.raises(FormatError, match="payload length mismatch"):
        read_native_volume(p)


def test_volume_malformed_header(tmp_path):
    p = tmp_path / "bad.fvf"
    p.write_bytes(struct.pack("<I", 5) + b"{nope" + b"\0" * 4)
    with pytest.raises(FormatError, match="JSON"):
        read_native_volume(p)


def test_volume_bad_dtype(tmp_path):
    p = tmp_path / "bad.fvf"
    _write_raw(p, {"dims": [1, 1, 1, 1], "dtype": "f64le"}, b"\0" * 8)
    with pytest.raises(FormatError, match="dtype"):
        read_native_volume(p)


def test_volume_non_finite(tmp_path):
    p = tmp_path / "bad.fvf"
    _write_raw(p, {"dims": [1, 1, 1, 1], "dtype": "f32le"}, np.array([np.nan], "<f4").tobytes())
    with pytest.raises(FormatError, match="non-finite"):
        read_native_volume(p)


def test_volume_bad_ncoef(tmp_path):
    p = tmp_path / "bad.fvf"
    _write_raw(p, {"dims": [1, 1, 1, 7], "dtype": "f32le"}, b"\0" * 28)
    with pytest.raises(FormatError, match="ncoef"):
        read_native_volume(p)


def test_mask_roundtrip(tmp_path, rng):
    m = Mask(rng.random((4, 5, 6)) > 0.5)
    p = tmp_path / "m.fvf"
    write_mask(m, p)
    assert np.array_equal(read_mask(p).data, m.data)


@given(st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
       st.sampled_from([1, 6, 15, 28, 45]), st.integers(0, 2 ** 32 - 1))
def test_volume_roundtrip_property(tmp_path_factory, dims, ncoef, seed):
    rng = np.random.default_rng(seed)
    vol = SHVolume((rng.normal(size=dims + (ncoef,)) * 1e3).astype(np.float32))
    p = tmp_path_factory.mktemp("rt") / "v.fvf"
    write_native_volume(vol, p)
    assert read_native_volume(p).data.tobytes() == vol.data.tobytes()


# ---------------------------------------------------------------------------
# fixel file


def test_fixel_roundtrip_bit_exact(tmp_path, rng):
    fx = random_fixels(rng)
    p = tmp_path / "f.fxf"
    write_fixels(fx, p)
    back = read_fixels(p)
    assert back.dims == fx.dims
    for a in ("voxel", "direction", "fd", "peak"):
        assert getattr(back, a).tobytes() == getattr(fx, a).tobytes()


def test_fixel_header_offsets(tmp_path, rng):
    fx = random_fixels(rng, n=5)
    p = tmp_path / "f.fxf"
    write_fixels(fx, p)
    raw = p.read_bytes()
    (hlen,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4:4 + hlen])
    assert header["n_fixels"] == 5
    assert header["offsets"] == {"voxel_index": 0, "direction": 60, "fd": 120, "peak": 140}
    payload = raw[4 + hlen:]
    assert len(payload) == 32 * 5
    fd = np.frombuffer(payload, "<f4", count=5, offset=120)
    assert fd.tobytes() == fx.fd.tobytes()


def test_empty_fixel_roundtrip(tmp_path):
    p = tmp_path / "e.fxf"
    write_fixels(FixelSet.empty((2, 2, 2)), p)
    back = read_fixels(p)
    assert len(back) == 0 and back.dims == (2, 2, 2)


def test_fixel_truncated(tmp_path, rng):
    p = tmp_path / "f.fxf"
    write_fixels(random_fixels(rng), p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(FormatError):
        read_fixels(p)


def test_fixelset_validation():
    with pytest.raises(ShapeError):
        FixelSet((2, 2, 2), [[2, 0, 0]], [[0, 0, 1]], [1.0], [1.0])
    with pytest.raises(ShapeError):
        FixelSet((2, 2, 2), [[0, 0, 0]], [[0, 0, 1]], [1.0, 2.0], [1.0])


def test_fixelset_groups_unsorted():
    fx = FixelSet((2, 1, 1), [[1, 0, 0], [0, 0, 0], [1, 0, 0]], np.eye(3), [1, 2, 3], [1, 2, 3])
    groups = {k: list(v) for k, v in fx.groups()}
    assert groups == {0: [1], 1: [0, 2]}
    assert fx.count_map()[:, 0, 0].tolist() == [1, 2]


# ---------------------------------------------------------------------------
# NIfTI import (fixtures written by nibabel; see tests/data/make_fixtures.py)


@pytest.fixture
def expected(data_dir):
    with open(os.path.join(data_dir, "expected.json")) as fh:
        return json.load(fh)


def test_nifti_gz_4d(data_dir, expected):
    vol = import_nifti(os.path.join(data_dir, "sh6.nii.gz"))
    exp = expected["sh6.nii.gz"]
    assert vol.data.shape == (3, 4, 5, 6)
    assert vol.voxel_size == tuple(exp["voxel_size"])
    np.testing.assert_allclose(vol.affine.ravel(), exp["affine"])
    ref = np.arange(360, dtype=np.float32).reshape(3, 4, 5, 6) / 10.0
    np.testing.assert_array_equal(vol.data, ref)
    assert float(vol.data.astype(np.float64).sum()) == pytest.approx(exp["sum"])


def test_nifti_qform(data_dir, expected):
    vol = import_nifti(os.path.join(data_dir, "qform.nii"))
    np.testing.assert_allclose(vol.affine.ravel(), expected["qform.nii"]["affine"], atol=1e-6)
    assert vol.ncoef == 1


def test_nifti_scaling(data_dir):
    vol = import_nifti(os.path.join(data_dir, "scaled.nii"))
    assert np.all(vol.data == 7.0)


def test_nifti_big_endian(data_dir, expected):
    vol = import_nifti(os.path.join(data_dir, "bigendian.nii"))
    np.testing.assert_array_equal(vol.data[..., 0].ravel(order="F"), expected["bigendian.nii"]["values_f"])


def test_nifti_int16_rejected(data_dir):
    with pytest.raises(FormatError, match="unsupported datatype 4"):
        import_nifti(os.path.join(data_dir, "int16.nii"))


def test_nifti_dim5_rejected(data_dir):
    with pytest.raises(FormatError, match="dim"):
        import_nifti(os.path.join(data_dir, "dim5.nii"))


def test_nifti_truncated(tmp_path, data_dir):
    raw = gzip.decompress(open(os.path.join(data_dir, "sh6.nii.gz"), "rb").read())
    p = tmp_path / "t.nii"
    p.write_bytes(raw[:-10])
    with pytest.raises(FormatError, match="truncated"):
        import_nifti(p)
    p.write_bytes(raw[:200])
    with pytest.raises(FormatError, match="truncated"):
        import_nifti(p)


def test_nifti_bad_magic(tmp_path, data_dir):
    raw = bytearray(open(os.path.join(data_dir, "scaled.nii"), "rb").read())
    raw[344:348] = b"ni1\0"
    p = tmp_path / "pair.nii"
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="magic"):
        import_nifti(p)


def test_load_volume_dispatch(tmp_path, data_dir, rng):
    assert load_volume(os.path.join(data_dir, "scaled.nii")).dims == (2, 2, 2)
    p = tmp_path / "v.fvf"
    write_native_volume(random_volume(rng), p)
    assert load_volume(p).dims == (3, 4, 5)


# ---------------------------------------------------------------------------
# gradients


def test_fsl_gradients_both_orientations(tmp_path):
    vecs = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    bvals = [0, 1000, 1000, 2000]
    (tmp_path / "bvals").write_text(" ".join(map(str, bvals)))
    (tmp_path / "bvecs").write_text("\n".join(" ".join(map(str, row)) for row in vecs.T))
    (tmp_path / "bvecs_t").write_text("\n".join(" ".join(map(str, row)) for row in vecs))
    a = read_fsl_gradients(tmp_path / "bvecs", tmp_path / "bvals")
    b = read_fsl_gradients(tmp_path / "bvecs_t", tmp_path / "bvals")
    np.testing.assert_array_equal(a.directions, b.directions)
    assert a.shells.keys() == {0.0, 1000.0, 2000.0}
    assert list(a.b0_indices()) == [0]


def test_fsl_column_mismatch(tmp_path):
    (tmp_path / "bvals").write_text("0 1000 1000")
    (tmp_path / "bvecs").write_text("0 1 0 0\n0 0 1 0\n0 0 0 1\n")
    with pytest.raises(ShapeError, match="column-count mismatch"):
        read_fsl_gradients(tmp_path / "bvecs", tmp_path / "bvals")


def test_gradient_roundtrips(tmp_path, rng):
    d = rng.normal(size=(10, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    d[0] = 0
    b = np.r_[0, np.full(9, 1000.0)]
    t = GradientTable(d, b)
    write_fsl_gradients(t, tmp_path / "bvecs", tmp_path / "bvals")
    back = read_gradients(tmp_path / "bvecs", tmp_path / "bvals")
    np.testing.assert_allclose(back.directions, t.directions, atol=1e-9)
    write_mrtrix_gradients(t, tmp_path / "grad.b")
    back = read_mrtrix_gradients(tmp_path / "grad.b")
    assert back.source_format == "mrtrix"
    np.testing.assert_allclose(back.bvalues, b)


def test_mrtrix_bad_columns(tmp_path):
    (tmp_path / "g.b").write_text("0 0 1\n")
    with pytest.raises(FormatError):
        read_mrtrix_gradients(tmp_path / "g.b")


def test_shell_grouping_tolerance():
    t = GradientTable(np.eye(3), [995, 1010, 2990])
    assert set(t.shells) == {1000.0, 3000.0}
    assert t.shell_bvalues()[1000.0] == pytest.approx(1002.5)


# ---------------------------------------------------------------------------
# connectivity matrices


def test_connmatrix_roundtrip(tmp_path, rng):
    w = rng.random((5, 5))
    m = connmatrix_from_array(w + w.T)
    write_connmatrix(m, tmp_path / "c.csv")
    back = read_connmatrix(tmp_path / "c.csv")
    assert back.labels == m.labels
    np.testing.assert_array_equal(back.weights, m.weights)


def test_connmatrix_without_header(tmp_path):
    (tmp_path / "c.csv").write_text("0,1,2\n1,0,3\n2,3,0\n")
    m = read_connmatrix(tmp_path / "c.csv")
    assert m.labels == ["n0", "n1", "n2"]
    assert m.weights[1, 2] == 3


def test_connmatrix_non_square(tmp_path):
    (tmp_path / "c.csv").write_text("0,1,2\n1,0,3\n")
    with pytest.raises(ShapeError, match="non-square"):
        read_connmatrix(tmp_path / "c.csv")


def test_connmatrix_asymmetry_warns_and_averages(caplog):
    w = np.array([[0, 1.0], [3.0, 0]])
    with caplog.at_level(logging.WARNING):
        m = connmatrix_from_array(w)
    assert m.weights[0, 1] == m.weights[1, 0] == 2.0
    assert "asymmetry" in caplog.text


def test_connmatrix_diag_zeroed_and_negative_rejected():
    m = connmatrix_from_array(np.array([[5.0, 1], [1, 5]]))
    assert m.weights[0, 0] == 0
    with pytest.raises(FormatError):
        connmatrix_from_array(np.array([[0, -1.0], [-1, 0]]))
    with pytest.raises(ShapeError):
        ConnMatrix(np.array([[0, 1.0], [2, 0]]))


def test_default_labels():
    assert default_labels(84)[0] == "L.BSTS"
    assert len(set(default_labels(84))) == 84
    assert default_labels(3) == ["n0", "n1", "n2"]
