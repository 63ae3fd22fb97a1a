"""Minimal NIfTI-1 reader (uncompressed, float32 / int16, either endianness)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, UnsupportedDatatypeError

HEADER_SIZE = 348
_DTYPES = {16: ("f4", 32), 4: ("i2", 16)}
_MAGICS = (b"n+1\x00", b"ni1\x00")


def _endianness(raw: bytes) -> str:
    for order in "<>":
        if struct.unpack(order + "i", raw[:4])[0] == HEADER_SIZE:
            return order
    raise FormatError(
        f"sizeof_hdr is {struct.unpack('<i', raw[:4])[0]}, expected {HEADER_SIZE}", field="sizeof_hdr"
    )


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"file shorter than the {HEADER_SIZE}-byte header", field="sizeof_hdr")
    bo = _endianness(raw)
    hdr = {
        "endian": bo,
        "sizeof_hdr": struct.unpack(bo + "i", raw[0:4])[0],
        "dim": struct.unpack(bo + "8h", raw[40:56]),
        "datatype": struct.unpack(bo + "h", raw[70:72])[0],
        "bitpix": struct.unpack(bo + "h", raw[72:74])[0],
        "pixdim": struct.unpack(bo + "8f", raw[76:108]),
        "vox_offset": struct.unpack(bo + "f", raw[108:112])[0],
        "scl_slope": struct.unpack(bo + "f", raw[112:116])[0],
        "scl_inter": struct.unpack(bo + "f", raw[116:120])[0],
        "magic": raw[344:348],
    }
    if hdr["magic"] not in _MAGICS:
        raise FormatError(f"bad magic {hdr['magic']!r}", field="magic")
    ndim = hdr["dim"][0]
    if not 1 <= ndim <= 7:
        raise FormatError(f"dim[0] = {ndim} outside 1..7", field="dim")
    if any(d < 1 for d in hdr["dim"][1 : ndim + 1]):
        raise FormatError(f"non-positive extent in dim {hdr['dim']}", field="dim")
    if hdr["datatype"] not in _DTYPES:
        raise UnsupportedDatatypeError(hdr["datatype"], supported=tuple(_DTYPES))
    if hdr["bitpix"] != _DTYPES[hdr["datatype"]][1]:
        raise FormatError(
            f"bitpix {hdr['bitpix']} inconsistent with datatype {hdr['datatype']}", field="bitpix"
        )
    return hdr


def load_nifti(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a NIfTI-1 file into a 4-D array plus voxel sizes.

    The array shape is ``dim[1..4]`` (missing trailing axes are 1); data are
    read in column-major order.  int16 data are scaled by ``scl_slope`` and
    ``scl_inter`` when the slope is non-zero.

    Parameters
    ----------
    path : str or Path
        ``.nii`` file, or a ``.hdr`` whose magic points at a paired ``.img``.

    Returns
    -------
    data : ndarray, shape (X, Y, Z, T)
        float64 voxel values.
    voxel_size : tuple of float
        ``pixdim[1..3]``.

    Raises
    ------
    FormatError
        Bad ``sizeof_hdr``, magic, ``dim`` or ``bitpix``, or a short file.
        ``.field`` names the offending header field.
    UnsupportedDatatypeError
        Datatype other than float32 (16) or int16 (4).
    """
    path = Path(path)
    hdr = read_header(path)
    ndim = hdr["dim"][0]
    shape = tuple(hdr["dim"][k] if k <= ndim else 1 for k in range(1, 5))
    code, _ = _DTYPES[hdr["datatype"]]
    dtype = np.dtype(hdr["endian"] + code)

    if hdr["magic"] == b"ni1\x00":
        data_path = path.with_suffix(".img")
        offset = int(hdr["vox_offset"])
    else:
        data_path = path
        offset = int(hdr["vox_offset"])
        if offset < HEADER_SIZE:
            raise FormatError(f"vox_offset {hdr['vox_offset']} lies inside the header", field="vox_offset")

    count = int(np.prod(shape))
    with open(data_path, "rb") as fh:
        fh.seek(offset)
        buf = fh.read(count * dtype.itemsize)
    if len(buf) != count * dtype.itemsize:
        raise FormatError(
            f"expected {count} voxels of {dtype.itemsize} bytes after vox_offset, file is truncated",
            field="vox_offset",
        )
    data = np.frombuffer(buf, dtype=dtype, count=count).astype(np.float64)
    data = data.reshape(shape, order="F")

    slope = hdr["scl_slope"]
    if hdr["datatype"] == 4 and slope != 0 and np.isfinite(slope):
        data = data * slope + hdr["scl_inter"]
    voxel_size = tuple(float(abs(p)) for p in hdr["pixdim"][1:4])
    return data, voxel_size
