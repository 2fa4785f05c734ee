"""Readers and writers for every on-disk format fodkit touches.

Native volume (``.fvf``) and fixel (``.fxf``) files share one envelope::

    [u32 little-endian header length][UTF-8 JSON header][payload]

Volume payloads are little-endian float32 in coefficient-slowest order
(x fastest), which is also NIfTI memory order. Fixel payloads hold four
arrays back to back: ``voxel_index`` (u32 x 3), ``direction`` (f32 x 3),
``fd`` (f32) and ``peak`` (f32), at byte offsets recorded in the header.
"""
from __future__ import annotations

import csv
import gzip
import json
import logging
import struct
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .atlas import DK_SHORT_NAMES
from .errors import FormatError, ShapeError
from .types import ConnMatrix, FixelSet, GradientTable, Mask, SHVolume

log = logging.getLogger(__name__)

_LEN = struct.Struct("<I")


def default_labels(n: int) -> List[str]:
    if n == len(DK_SHORT_NAMES):
        return list(DK_SHORT_NAMES)
    return [f"n{i}" for i in range(n)]


# ---------------------------------------------------------------------------
# envelope


def _write_envelope(path, header: dict, payload: bytes) -> None:
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_LEN.pack(len(head)))
        f.write(head)
        f.write(payload)


def _read_envelope(path) -> Tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for header length prefix")
    (hlen,) = _LEN.unpack_from(raw, 0)
    if 4 + hlen > len(raw):
        raise FormatError(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(raw[4:4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed JSON header ({exc})") from None
    if not isinstance(header, dict):
        raise FormatError(f"{path}: JSON header must be an object")
    return header, raw[4 + hlen:]


def _check_dtype(header, path):
    dtype = header.get("dtype", "f32le")
    if dtype != "f32le":
        raise FormatError(f"{path}: unsupported dtype {dtype!r} (only 'f32le')")


# ---------------------------------------------------------------------------
# native volume


def read_native_volume(path) -> SHVolume:
    header, payload = _read_envelope(path)
    _check_dtype(header, path)
    try:
        dims = [int(d) for d in header["dims"]]
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: header is missing integer 'dims'") from None
    if len(dims) == 3:
        dims.append(int(header.get("ncoef", 1)))
    elif len(dims) == 4:
        if "ncoef" in header and int(header["ncoef"]) != dims[3]:
            raise FormatError(f"{path}: ncoef {header['ncoef']} disagrees with dims[3]={dims[3]}")
    else:
        raise FormatError(f"{path}: dims must have 3 or 4 entries")
    if any(d <= 0 for d in dims):
        raise FormatError(f"{path}: dims must be positive, got {dims}")
    n = int(np.prod(dims))
    if len(payload) != 4 * n:
        raise FormatError(
            f"{path}: payload length mismatch: expected {n} float32 values, got {len(payload) / 4:g}")
    data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: payload contains non-finite values")
    voxel_size = header.get("voxel_size", [1.0, 1.0, 1.0])
    affine = header.get("affine")
    if affine is not None:
        affine = np.asarray(affine, dtype=np.float64)
        if affine.size != 16:
            raise FormatError(f"{path}: affine must have 16 entries")
    return SHVolume(data.astype(np.float32), tuple(voxel_size), affine)


def write_native_volume(vol: SHVolume, path) -> None:
    header = {
        "dims": list(vol.dims) + [vol.ncoef],
        "ncoef": vol.ncoef,
        "voxel_size": list(vol.voxel_size),
        "affine": [float(v) for v in np.asarray(vol.affine).reshape(-1)],
        "dtype": "f32le",
    }
    payload = np.asarray(vol.data, dtype="<f4").tobytes(order="F")
    _write_envelope(path, header, payload)


def read_mask(path) -> Mask:
    """Load a mask from a native or NIfTI volume; nonzero voxels are inside."""
    vol = load_volume(path)
    if vol.ncoef != 1:
        raise FormatError(f"{path}: mask volume must have a single component, got {vol.ncoef}")
    return Mask(vol.data[..., 0] != 0, vol.voxel_size)


def write_mask(mask: Mask, path) -> None:
    write_native_volume(SHVolume(mask.data.astype(np.float32), mask.voxel_size), path)


def load_volume(path) -> SHVolume:
    """Dispatch on extension: ``.nii``/``.nii.gz`` go through :func:`import_nifti`."""
    name = str(path).lower()
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        return import_nifti(path)
    return read_native_volume(path)


# ---------------------------------------------------------------------------
# fixel file


def write_fixels(fixels: FixelSet, path) -> None:
    n = len(fixels)
    offsets = {"voxel_index": 0, "direction": 12 * n, "fd": 24 * n, "peak": 28 * n}
    header = {
        "format": "fixel",
        "dims": list(fixels.dims),
        "n_fixels": n,
        "offsets": offsets,
        "dtype": "f32le",
        "index_dtype": "u32le",
    }
    payload = b"".join([
        np.asarray(fixels.voxel, dtype="<u4").tobytes(),
        np.asarray(fixels.direction, dtype="<f4").tobytes(),
        np.asarray(fixels.fd, dtype="<f4").tobytes(),
        np.asarray(fixels.peak, dtype="<f4").tobytes(),
    ])
    _write_envelope(path, header, payload)


def read_fixels(path) -> FixelSet:
    header, payload = _read_envelope(path)
    _check_dtype(header, path)
    try:
        n = int(header["n_fixels"])
        dims = [int(d) for d in header["dims"]][:3]
        offsets = header["offsets"]
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"{path}: fixel header needs dims, n_fixels and offsets") from None
    if len(payload) != 32 * n:
        raise FormatError(f"{path}: payload length mismatch for {n} fixels")

    def arr(key, dtype, count):
        start = int(offsets[key])
        if start < 0 or start + 4 * count > len(payload):
            raise FormatError(f"{path}: array {key!r} out of payload bounds")
        return np.frombuffer(payload, dtype=dtype, count=count, offset=start)

    voxel = arr("voxel_index", "<u4", 3 * n).reshape(n, 3)
    direction = arr("direction", "<f4", 3 * n).reshape(n, 3)
    fd = arr("fd", "<f4", n)
    peak = arr("peak", "<f4", n)
    for a in (direction, fd, peak):
        if not np.all(np.isfinite(a)):
            raise FormatError(f"{path}: fixel payload contains non-finite values")
    return FixelSet(tuple(dims), voxel.copy(), direction.copy(), fd.copy(), peak.copy())


# ---------------------------------------------------------------------------
# NIfTI-1 single-file import (float32 only)

_NIFTI_FLOAT32 = 16


def _nifti_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _qform_affine(quat, offset, pixdim) -> np.ndarray:
    b, c, d = quat
    a = np.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
    R = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
    ])
    qfac = -1.0 if pixdim[0] < 0 else 1.0
    aff = np.eye(4)
    aff[:3, :3] = R * np.array([pixdim[1], pixdim[2], qfac * pixdim[3]])
    aff[:3, 3] = offset
    return aff


def import_nifti(path) -> SHVolume:
    raw = _nifti_bytes(path)
    if len(raw) < 348:
        raise FormatError(f"{path}: truncated file ({len(raw)} bytes < 348-byte header)")
    if struct.unpack_from("<i", raw, 0)[0] == 348:
        e = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == 348:
        e = ">"
    else:
        raise FormatError(f"{path}: sizeof_hdr is not 348; not a NIfTI-1 file")
    magic = raw[344:348]
    if magic != b"n+1\x00":
        raise FormatError(f"{path}: magic {magic!r} is not single-file NIfTI-1 'n+1'")
    dim = struct.unpack_from(e + "8h", raw, 40)
    datatype = struct.unpack_from(e + "h", raw, 70)[0]
    pixdim = struct.unpack_from(e + "8f", raw, 76)
    vox_offset = struct.unpack_from(e + "f", raw, 108)[0]
    scl_slope, scl_inter = struct.unpack_from(e + "2f", raw, 112)
    qform_code, sform_code = struct.unpack_from(e + "2h", raw, 252)
    quat = struct.unpack_from(e + "3f", raw, 256)
    qoffset = struct.unpack_from(e + "3f", raw, 268)
    srow = np.array(struct.unpack_from(e + "12f", raw, 280), dtype=np.float64).reshape(3, 4)

    if datatype != _NIFTI_FLOAT32:
        raise FormatError(f"{path}: unsupported datatype {datatype} (only float32 = 16)")
    ndim = dim[0]
    if ndim > 4:
        raise FormatError(f"{path}: dim[0] = {ndim} > 4 is not supported")
    if ndim < 3:
        raise FormatError(f"{path}: dim[0] = {ndim}; a 3D or 4D image is required")
    shape = [int(d) for d in dim[1:4]] + [int(dim[4]) if ndim == 4 else 1]
    if any(s <= 0 for s in shape):
        raise FormatError(f"{path}: non-positive dimension in {shape}")
    count = int(np.prod(shape))
    start = int(vox_offset) if vox_offset >= 348 else 352
    if start + 4 * count > len(raw):
        raise FormatError(f"{path}: truncated file: need {start + 4 * count} bytes, have {len(raw)}")
    data = np.frombuffer(raw, dtype=e + "f4", count=count, offset=start)
    data = data.astype(np.float64).reshape(shape, order="F")
    if scl_slope != 0 and np.isfinite(scl_slope):
        data = data * scl_slope + (scl_inter if np.isfinite(scl_inter) else 0.0)

    voxel_size = tuple(abs(float(p)) for p in pixdim[1:4])
    if sform_code > 0:
        affine = np.vstack([srow, [0, 0, 0, 1]])
    elif qform_code > 0:
        affine = _qform_affine(quat, qoffset, pixdim)
    else:
        affine = None
    if affine is not None:
        # keep voxel size consistent with the affine actually used
        voxel_size = tuple(float(v) for v in np.linalg.norm(affine[:3, :3], axis=0))
    return SHVolume(data.astype(np.float32), voxel_size, affine)


# ---------------------------------------------------------------------------
# gradient tables


def _numeric_rows(path) -> List[List[float]]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric token in {line!r}") from None
    return rows


def read_fsl_gradients(bvecs_path, bvals_path, **kw) -> GradientTable:
    vec_rows = _numeric_rows(bvecs_path)
    bvals = [v for row in _numeric_rows(bvals_path) for v in row]
    if len({len(r) for r in vec_rows}) > 1:
        raise FormatError(f"{bvecs_path}: rows have differing column counts")
    vecs = np.array(vec_rows, dtype=np.float64)
    if vecs.ndim != 2 or vecs.size == 0:
        raise FormatError(f"{bvecs_path}: empty bvecs file")
    if vecs.shape[0] == 3:
        vecs = vecs.T
    elif vecs.shape[1] != 3:
        raise FormatError(f"{bvecs_path}: bvecs must be a 3 x N matrix, got {vecs.shape}")
    if len(vecs) != len(bvals):
        raise ShapeError(f"column-count mismatch: bvecs has {len(vecs)} columns, bvals has {len(bvals)}")
    return GradientTable(vecs, np.array(bvals), source_format="fsl", **kw)


def read_mrtrix_gradients(path, **kw) -> GradientTable:
    rows = _numeric_rows(path)
    if not rows or any(len(r) != 4 for r in rows):
        raise FormatError(f"{path}: MRtrix gradient table needs 4 numbers (x y z b) per row")
    arr = np.array(rows, dtype=np.float64)
    return GradientTable(arr[:, :3], arr[:, 3], source_format="mrtrix", **kw)


def read_gradients(bvecs_path=None, bvals_path=None, mrtrix_path=None, **kw) -> GradientTable:
    if mrtrix_path is not None:
        return read_mrtrix_gradients(mrtrix_path, **kw)
    if bvecs_path is None or bvals_path is None:
        raise FormatError("need either bvecs and bvals paths or an MRtrix gradient file")
    return read_fsl_gradients(bvecs_path, bvals_path, **kw)


def write_fsl_gradients(table: GradientTable, bvecs_path, bvals_path) -> None:
    with open(bvecs_path, "w") as f:
        for axis in range(3):
            f.write(" ".join(f"{v:.10g}" for v in table.directions[:, axis]) + "\n")
    with open(bvals_path, "w") as f:
        f.write(" ".join(f"{b:.10g}" for b in table.bvalues) + "\n")


def write_mrtrix_gradients(table: GradientTable, path) -> None:
    with open(path, "w") as f:
        for d, b in zip(table.directions, table.bvalues):
            f.write(f"{d[0]:.10g} {d[1]:.10g} {d[2]:.10g} {b:.10g}\n")


# ---------------------------------------------------------------------------
# connectivity matrices


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def read_connmatrix(path) -> ConnMatrix:
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and any(tok.strip() for tok in r)]
    if not rows:
        raise FormatError(f"{path}: empty connectivity file")
    labels = None
    if not all(_is_number(tok) for tok in rows[0]):
        labels = [tok.strip() for tok in rows[0]]
        rows = rows[1:]
    try:
        w = np.array([[float(tok) for tok in r] for r in rows], dtype=np.float64)
    except ValueError:
        raise FormatError(f"{path}: non-numeric entry in connectivity matrix") from None
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        shape = (len(rows), len(rows[0]) if rows else 0)
        raise ShapeError(f"{path}: non-square connectivity matrix {shape[0]}x{shape[1]}")
    return connmatrix_from_array(w, labels, source=str(path))


def connmatrix_from_array(w, labels=None, source="matrix") -> ConnMatrix:
    """Validate and symmetrise a raw weight array into a :class:`ConnMatrix`."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"{source}: non-square connectivity matrix {w.shape}")
    if not np.all(np.isfinite(w)):
        raise FormatError(f"{source}: non-finite connectivity weight")
    if np.any(w < 0):
        raise FormatError(f"{source}: negative connectivity weight")
    asym = np.max(np.abs(w - w.T)) if w.size else 0.0
    scale = np.max(np.abs(w)) if w.size else 0.0
    if asym > 1e-6 * scale:
        log.warning("%s: max asymmetry %.3g exceeds 1e-6 of max weight; averaging with transpose",
                    source, asym)
    w = 0.5 * (w + w.T)
    np.fill_diagonal(w, 0.0)
    return ConnMatrix(w, labels or [])


def write_connmatrix(m: ConnMatrix, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(m.labels)
        for row in m.weights:
            writer.writerow([repr(float(v)) for v in row])
