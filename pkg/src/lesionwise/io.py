"""Volume file IO: a portable raw format and a minimal NIfTI-1 reader.

Raw format
----------
A volume ``foo.raw`` is a flat little-endian binary file accompanied by a
JSON sidecar ``foo.raw.json``::

    { "shape": [nx, ny, nz], "spacing": [sx, sy, sz],
      "dtype": "u8" | "f32", "order": "x-fastest" }

The binary file holds exactly ``nx * ny * nz`` values with x varying fastest
(linear index ``x + nx * (y + ny * z)``). ``u8`` volumes load as masks
(nonzero is foreground), ``f32`` volumes load as logit grids. Write/read
round trips are bit-exact.

NIfTI-1
-------
Read support for single-file 3D volumes (``.nii``, optionally gzipped) with
datatypes uint8, int16 and float32; spacing is taken from ``pixdim[1..3]``.
``write_nifti`` emits a minimal little-endian single-file NIfTI-1 volume and
exists so phantoms can be exported for external viewers; the raw format is
the canonical interchange format.
"""

from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from .volumes import BinaryMask, LogitVolume, ProbVolume, Spacing

RAW_DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4")}

# NIfTI-1 datatype codes we accept.
_NIFTI_DTYPES = {2: np.dtype("u1"), 4: np.dtype("i2"), 16: np.dtype("f4")}
_NIFTI_BITPIX = {2: 8, 4: 16, 16: 32}


class VolumeFormatError(ValueError):
    """A volume file or its header could not be parsed."""


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _is_nifti_path(path: Path) -> bool:
    name = path.name.lower()
    return name.endswith(".nii") or name.endswith(".nii.gz")


def write_volume(vol, path) -> None:
    """Write a volume to ``path`` (raw format, or NIfTI if the name ends .nii[.gz]).

    BinaryMask is stored as u8 (0/1), LogitVolume and ProbVolume as f32.
    """
    path = Path(path)
    if _is_nifti_path(path):
        write_nifti(vol, path)
        return
    if isinstance(vol, BinaryMask):
        dtype_name = "u8"
        data = vol.voxels.astype(np.uint8)
    elif isinstance(vol, (LogitVolume, ProbVolume)):
        dtype_name = "f32"
        data = vol.voxels.astype("<f4")
    else:
        raise TypeError(f"cannot write volume of type {type(vol).__name__}")
    header = {
        "shape": list(vol.shape.as_tuple()),
        "spacing": list(vol.spacing.as_tuple()),
        "dtype": dtype_name,
        "order": "x-fastest",
    }
    _sidecar_path(path).write_text(json.dumps(header, indent=2) + "\n")
    path.write_bytes(np.asfortranarray(data).tobytes(order="F"))


def read_volume(path):
    """Read a volume; returns BinaryMask for u8/int inputs, LogitVolume for f32.

    Raw volumes require the JSON sidecar next to the binary file. NIfTI-1
    volumes (.nii, .nii.gz) are detected by name.
    """
    path = Path(path)
    if _is_nifti_path(path):
        return _read_nifti(path, as_mask=None)
    return _read_raw(path, as_mask=None)


def read_mask(path) -> BinaryMask:
    """Read any supported volume as a mask: any nonzero value is foreground."""
    path = Path(path)
    if _is_nifti_path(path):
        return _read_nifti(path, as_mask=True)
    return _read_raw(path, as_mask=True)


def _finish(arr: np.ndarray, spacing: Spacing, as_mask, is_float: bool):
    if as_mask:
        return BinaryMask(arr != 0, spacing)
    if is_float:
        if not np.isfinite(arr).all():
            raise VolumeFormatError("float volume contains NaN or Inf values")
        return LogitVolume(arr.astype(np.float64), spacing)
    return BinaryMask(arr != 0, spacing)


# ---------------------------------------------------------------------------
# raw format
# ---------------------------------------------------------------------------

def _read_raw(path: Path, as_mask):
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        raise VolumeFormatError(f"missing raw sidecar header: {sidecar}")
    try:
        header = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"malformed sidecar {sidecar}: {exc}") from exc

    for key in ("shape", "spacing", "dtype", "order"):
        if key not in header:
            raise VolumeFormatError(f"sidecar {sidecar} is missing key {key!r}")
    shape = header["shape"]
    spacing = header["spacing"]
    if not (isinstance(shape, list) and len(shape) == 3):
        raise VolumeFormatError(f"sidecar shape must be a list of 3 ints, got {shape!r}")
    if not (isinstance(spacing, list) and len(spacing) == 3):
        raise VolumeFormatError(f"sidecar spacing must be a list of 3 numbers, got {spacing!r}")
    if header["order"] != "x-fastest":
        raise VolumeFormatError(f"unsupported order {header['order']!r} (expected 'x-fastest')")
    if header["dtype"] not in RAW_DTYPES:
        raise VolumeFormatError(f"unsupported raw dtype {header['dtype']!r} (expected 'u8' or 'f32')")

    try:
        nx, ny, nz = (int(n) for n in shape)
        sp = Spacing(*(float(s) for s in spacing))
    except (TypeError, ValueError) as exc:
        raise VolumeFormatError(f"sidecar {sidecar}: {exc}") from exc
    if min(nx, ny, nz) <= 0:
        raise VolumeFormatError(f"sidecar {sidecar}: non-positive shape {shape!r}")
    dtype = RAW_DTYPES[header["dtype"]]

    raw = path.read_bytes()
    expected = nx * ny * nz * dtype.itemsize
    if len(raw) != expected:
        raise VolumeFormatError(
            f"{path}: expected {expected} bytes for shape {shape} dtype "
            f"{header['dtype']}, found {len(raw)}"
        )
    arr = np.frombuffer(raw, dtype=dtype).reshape((nx, ny, nz), order="F")
    return _finish(arr, sp, as_mask, is_float=header["dtype"] == "f32")


# ---------------------------------------------------------------------------
# NIfTI-1
# ---------------------------------------------------------------------------

def _read_nifti(path: Path, as_mask):
    blob = path.read_bytes()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    if len(blob) < 348:
        raise VolumeFormatError(
            f"{path}: NIfTI header truncated at byte {len(blob)} (need 348)"
        )

    # Endianness is decided by whichever byte order makes sizeof_hdr == 348.
    endian = None
    for cand in ("<", ">"):
        if struct.unpack_from(cand + "i", blob, 0)[0] == 348:
            endian = cand
            break
    if endian is None:
        raise VolumeFormatError(
            f"{path}: bad sizeof_hdr at byte offset 0 (expected 348 in either byte order)"
        )

    magic = struct.unpack_from("4s", blob, 344)[0]
    if magic == b"ni1\x00":
        raise VolumeFormatError(
            f"{path}: two-file NIfTI (magic 'ni1' at byte offset 344) is not supported"
        )
    if magic != b"n+1\x00":
        raise VolumeFormatError(f"{path}: bad magic {magic!r} at byte offset 344")

    dim = struct.unpack_from(endian + "8h", blob, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise VolumeFormatError(f"{path}: invalid dim[0]={ndim} at byte offset 40")
    if ndim < 3 or any(d > 1 for d in dim[4 : 1 + ndim]):
        raise VolumeFormatError(
            f"{path}: only 3D volumes are supported, got dim={list(dim[: 1 + ndim])}"
        )
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) <= 0:
        raise VolumeFormatError(f"{path}: non-positive dimension in dim (byte offset 40)")

    datatype, bitpix = struct.unpack_from(endian + "2h", blob, 70)
    if datatype not in _NIFTI_DTYPES:
        raise VolumeFormatError(
            f"{path}: unsupported NIfTI datatype code {datatype} at byte offset 70 "
            f"(supported: uint8=2, int16=4, float32=16)"
        )
    if bitpix != _NIFTI_BITPIX[datatype]:
        raise VolumeFormatError(
            f"{path}: bitpix {bitpix} inconsistent with datatype {datatype} (byte offset 72)"
        )

    pixdim = struct.unpack_from(endian + "8f", blob, 76)
    try:
        sp = Spacing(float(pixdim[1]), float(pixdim[2]), float(pixdim[3]))
    except ValueError as exc:
        raise VolumeFormatError(f"{path}: bad pixdim at byte offset 76: {exc}") from exc

    vox_offset = struct.unpack_from(endian + "f", blob, 108)[0]
    if not np.isfinite(vox_offset) or vox_offset < 348 or vox_offset != int(vox_offset):
        raise VolumeFormatError(
            f"{path}: invalid vox_offset {vox_offset} at byte offset 108"
        )
    offset = int(vox_offset)

    dtype = _NIFTI_DTYPES[datatype].newbyteorder(endian)
    expected = nx * ny * nz * dtype.itemsize
    if len(blob) < offset + expected:
        raise VolumeFormatError(
            f"{path}: data truncated, need {expected} bytes at offset {offset}, "
            f"file holds {len(blob) - offset}"
        )
    arr = np.frombuffer(blob, dtype=dtype, count=nx * ny * nz, offset=offset)
    arr = arr.reshape((nx, ny, nz), order="F")
    return _finish(arr, sp, as_mask, is_float=datatype == 16)


def write_nifti(vol, path) -> None:
    """Write a minimal single-file little-endian NIfTI-1 volume."""
    path = Path(path)
    if isinstance(vol, BinaryMask):
        datatype, data = 2, vol.voxels.astype("u1")
    elif isinstance(vol, (LogitVolume, ProbVolume)):
        datatype, data = 16, vol.voxels.astype("<f4")
    else:
        raise TypeError(f"cannot write volume of type {type(vol).__name__}")

    nx, ny, nz = vol.shape.as_tuple()
    sx, sy, sz = vol.spacing.as_tuple()
    header = bytearray(352)  # 348-byte header + 4-byte extension flag
    struct.pack_into("<i", header, 0, 348)
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", header, 70, datatype, _NIFTI_BITPIX[datatype])
    struct.pack_into("<8f", header, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, 352.0)
    struct.pack_into("<2f", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", header, 123, 2)  # xyzt_units: millimetres
    struct.pack_into("<4s", header, 344, b"n+1\x00")

    payload = bytes(header) + data.tobytes(order="F")
    if path.name.lower().endswith(".gz"):
        # mtime pinned so identical volumes produce identical bytes
        path.write_bytes(gzip.compress(payload, mtime=0))
    else:
        path.write_bytes(payload)
