"""Headerless .bin volumes described by an explicit sidecar descriptor.

Raw dumps carry no metadata at all, so loading silently-guessed geometry
would corrupt data; the descriptor (CLI flags or a JSON sidecar) is
mandatory by design.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import ParseError, SizeError
from ..volume import Volume, normalize

DTYPE_SIZES = {"u8": 1, "u16": 2, "f32": 4}
_NUMPY_CODES = {"u8": "u1", "u16": "u2", "f32": "f4"}


@dataclass(frozen=True)
class RawDescriptor:
    dims: tuple[int, int, int]  # (nx, ny, nz)
    dtype: str = "u8"
    endianness: str = "little"
    header_skip: int = 0

    def __post_init__(self) -> None:
        if self.dtype not in DTYPE_SIZES:
            raise ParseError(f"dtype must be one of {sorted(DTYPE_SIZES)}, got {self.dtype!r}")
        if self.endianness not in ("little", "big"):
            raise ParseError(f"endianness must be little|big, got {self.endianness!r}")
        if min(self.dims) < 1 or self.header_skip < 0:
            raise ParseError(f"invalid descriptor: dims={self.dims} skip={self.header_skip}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def payload_bytes(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz * DTYPE_SIZES[self.dtype]

    @classmethod
    def from_json(cls, text: str) -> "RawDescriptor":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad descriptor JSON: {exc}") from exc
        try:
            return cls(
                dims=tuple(obj["dims"]),
                dtype=obj.get("dtype", "u8"),
                endianness=obj.get("endianness", "little"),
                header_skip=int(obj.get("header_skip", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"descriptor missing field: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(
            {
                "dims": list(self.dims),
                "dtype": self.dtype,
                "endianness": self.endianness,
                "header_skip": self.header_skip,
            }
        )


def load_raw(data: bytes, descriptor: RawDescriptor) -> Volume:
    """Parse raw bytes exactly as declared; length must match the descriptor."""
    expected = descriptor.header_skip + descriptor.payload_bytes
    if len(data) != expected:
        raise SizeError(f"expected {expected} bytes, got {len(data)}")
    prefix = "<" if descriptor.endianness == "little" else ">"
    dtype = np.dtype(prefix + _NUMPY_CODES[descriptor.dtype])
    arr = np.frombuffer(data[descriptor.header_skip :], dtype=dtype)
    nx, ny, nz = descriptor.dims
    return normalize(arr.reshape((nz, ny, nx)), policy="minmax")
