"""NPY v1.0/v2.0 reader/writer, implemented against the published format
layout rather than delegating to numpy's own save/load, so header handling
stays auditable and the supported dtype subset is explicit.
"""

from __future__ import annotations

import ast
import struct

import numpy as np

from ..errors import FormatError, UnsupportedError
from ..volume import Volume, normalize

MAGIC = b"\x93NUMPY"
SUPPORTED_KINDS = {"u1": 1, "u2": 2, "f4": 4}


def _parse_header(data: bytes) -> tuple[dict, int]:
    if len(data) < 10 or data[:6] != MAGIC:
        raise FormatError("bad magic: not an NPY file")
    major, minor = data[6], data[7]
    if major == 1:
        (hlen,) = struct.unpack("<H", data[8:10])
        start = 10
    elif major == 2:
        (hlen,) = struct.unpack("<I", data[8:12])
        start = 12
    else:
        raise UnsupportedError(f"NPY version {major}.{minor} not supported")
    header = data[start : start + hlen]
    if len(header) != hlen:
        raise FormatError("truncated NPY header")
    try:
        meta = ast.literal_eval(header.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from exc
    if not isinstance(meta, dict) or not {"descr", "fortran_order", "shape"} <= set(meta):
        raise FormatError("NPY header missing required keys")
    return meta, start + hlen


def read_npy_array(data: bytes) -> np.ndarray:
    """Decode NPY bytes to the raw array (no normalization)."""
    meta, offset = _parse_header(data)
    descr = meta["descr"]
    if not isinstance(descr, str) or len(descr) != 3 or descr[1:] not in SUPPORTED_KINDS:
        raise UnsupportedError(f"unsupported dtype descriptor {descr!r}")
    shape = tuple(meta["shape"])
    dtype = np.dtype(descr)
    count = 1
    for d in shape:
        count *= int(d)
    payload = data[offset:]
    expected = count * dtype.itemsize
    if len(payload) < expected:
        raise FormatError(f"payload too short: expected {expected} bytes, got {len(payload)}")
    arr = np.frombuffer(payload[:expected], dtype=dtype)
    order = "F" if meta["fortran_order"] else "C"
    return arr.reshape(shape, order=order)


def parse_npy(data: bytes) -> Volume:
    """NPY bytes -> minmax-normalized Volume.

    Only 3D u8/u16/f32 arrays are accepted. The array's last axis becomes
    x (fastest), so shape (d0, d1, d2) loads as dims (d2, d1, d0).
    """
    arr = read_npy_array(data)
    if arr.ndim != 3:
        raise UnsupportedError(f"expected a 3D array, got rank {arr.ndim}")
    return normalize(np.ascontiguousarray(arr), policy="minmax")


def write_npy_array(arr: np.ndarray) -> bytes:
    """Encode an array as NPY v1.0 (little-endian, C order)."""
    arr = np.ascontiguousarray(arr)
    kind = arr.dtype.str.lstrip("<>|=")
    if kind not in SUPPORTED_KINDS:
        raise UnsupportedError(f"refusing to write dtype {arr.dtype}")
    descr = ("|" if kind == "u1" else "<") + kind
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    shape_repr = str(arr.shape) if len(arr.shape) != 1 else f"({arr.shape[0]},)"
    header = f"{{'descr': {descr!r}, 'fortran_order': False, 'shape': {shape_repr}, }}"
    # total preamble (magic + version + length field + header) padded to 64
    unpadded = len(MAGIC) + 2 + 2 + len(header) + 1
    pad = (64 - unpadded % 64) % 64
    header_bytes = (header + " " * pad + "\n").encode("latin1")
    out = bytearray()
    out += MAGIC
    out += bytes([1, 0])
    out += struct.pack("<H", len(header_bytes))
    out += header_bytes
    out += arr.tobytes()
    return bytes(out)


def write_npy(volume: Volume) -> bytes:
    """Write a volume's densities as a f32 NPY (z, y, x axis order)."""
    return write_npy_array(volume.data)
