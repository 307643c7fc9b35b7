"""Zipped image stacks: one grayscale PNG per z slice.

Slice order is lexicographic by archive filename, ascending. That is a
deliberate, documented contract: "s10.png" sorts before "s2.png". Writers
that want numeric order must zero-pad their names.
"""

from __future__ import annotations

import io
import warnings
import zipfile

import numpy as np
from PIL import Image

from ..errors import EmptyArchiveError, FormatError, ShapeError
from ..volume import Volume

IMAGE_SUFFIXES = (".png",)


class LuminanceConversionWarning(UserWarning):
    """A color slice was collapsed to luminance."""


def _slice_to_array(name: str, raw: bytes) -> tuple[np.ndarray, bool]:
    """Decode one PNG slice to float densities in [0, 1]; flags color input."""
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise FormatError(f"{name}: not a decodable image ({exc})") from exc
    converted = False
    if img.mode in ("L", "P") or img.mode.startswith("LA"):
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    elif img.mode in ("I", "I;16", "I;16B", "I;16L"):
        arr = np.asarray(img.convert("I"), dtype=np.float64) / 65535.0
    else:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
        converted = True
    return arr, converted


def load_zip_stack(archive_bytes: bytes) -> Volume:
    """ZIP of 8/16-bit grayscale PNG slices -> Volume with nz = slice count.

    Non-image entries are ignored. Color slices convert via luminance and
    raise a LuminanceConversionWarning. Mixed slice shapes raise ShapeError
    naming both offending files.
    """
    try:
        zf = zipfile.ZipFile(io.BytesIO(archive_bytes))
    except zipfile.BadZipFile as exc:
        raise FormatError(f"not a ZIP archive: {exc}") from exc
    names = sorted(
        n for n in zf.namelist()
        if not n.endswith("/") and n.lower().endswith(IMAGE_SUFFIXES)
    )
    if not names:
        raise EmptyArchiveError("archive holds no PNG slices")

    slices = []
    first_name = names[0]
    any_color = False
    for name in names:
        arr, converted = _slice_to_array(name, zf.read(name))
        any_color = any_color or converted
        if slices and arr.shape != slices[0].shape:
            raise ShapeError(
                f"slice {name!r} is {arr.shape[::-1]} but {first_name!r} is "
                f"{slices[0].shape[::-1]}"
            )
        slices.append(arr)
    if any_color:
        warnings.warn("color slices converted via luminance", LuminanceConversionWarning)
    data = np.stack(slices).astype(np.float32)
    lo = float(data.min())
    hi = float(data.max())
    return Volume(data=data, source_range=(lo, hi))


def write_zip_stack(volume: Volume, bit_depth: int = 8) -> bytes:
    """Encode densities back to a PNG slice archive (names z0000.png...)."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for k in range(volume.data.shape[0]):
            plane = volume.data[k]
            if bit_depth == 8:
                img = Image.fromarray(np.round(plane * 255.0).astype(np.uint8), mode="L")
            else:
                img = Image.fromarray(np.round(plane * 65535.0).astype(np.uint16))
            out = io.BytesIO()
            img.save(out, format="PNG")
            zf.writestr(f"z{k:04d}.png", out.getvalue())
    return buf.getvalue()
