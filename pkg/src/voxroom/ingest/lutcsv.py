"""LUT anchor files: CSV rows "index,r,g,b,a" expanded to 256 entries."""

from __future__ import annotations

import numpy as np

from ..errors import ParseError
from ..volume import LUT


def load_lut_csv(text: str, name: str = "custom") -> LUT:
    """2..256 anchor rows with strictly ascending indices in [0, 255].

    Entries between anchors interpolate linearly; entries beyond the first
    or last anchor extend flat.
    """
    anchors: list[tuple[int, float, float, float, float]] = []
    for row_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ParseError(f"row {row_no}: expected 'index,r,g,b,a', got {raw_line!r}")
        try:
            idx = int(parts[0])
            rgba = tuple(float(p) for p in parts[1:])
        except ValueError as exc:
            raise ParseError(f"row {row_no}: {exc}") from exc
        if not (0 <= idx <= 255):
            raise ParseError(f"row {row_no}: index {idx} outside [0, 255]")
        if anchors and idx <= anchors[-1][0]:
            raise ParseError(f"row {row_no}: index {idx} not ascending")
        if any(not (0.0 <= c <= 1.0) for c in rgba):
            raise ParseError(f"row {row_no}: channel outside [0, 1]")
        anchors.append((idx, *rgba))

    if len(anchors) < 2:
        raise ParseError(f"need at least 2 anchor rows, got {len(anchors)}")
    idxs = np.array([a[0] for a in anchors], dtype=np.float64)
    vals = np.array([a[1:] for a in anchors], dtype=np.float64)
    entries = np.zeros((256, 4), dtype=np.float32)
    for ch in range(4):
        entries[:, ch] = np.interp(np.arange(256), idxs, vals[:, ch])
    return LUT(name=name, entries=entries)
