"""Volume data model: normalized scalar fields, trilinear sampling, mip
pyramids and color lookup tables.

Arrays are stored ``(nz, ny, nx)`` C-contiguous so the x index is fastest
in memory; all public coordinates are ``(x, y, z)`` voxel coordinates.
Densities are float32 in [0, 1] regardless of the source dtype, so the
renderer has a single code path and u8/u16 sources stay lossless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError

MIP_MIN_DIM = 4  # pyramid stops once max(dims) <= this


@dataclass(frozen=True)
class Volume:
    """Dense scalar field with per-axis spacing (world units per voxel)."""

    data: np.ndarray  # float32 (nz, ny, nx), read-only
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    source_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"volume data must be 3D with dims >= 1, got shape {arr.shape}")
        if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
            raise ValueError("densities must lie in [0, 1]; normalize first")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "source_range", tuple(float(v) for v in self.source_range))

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz) in voxels."""
        nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def voxel_count(self) -> int:
        return int(self.data.size)

    def mean(self) -> float:
        return float(self.data.mean(dtype=np.float64))


@dataclass(frozen=True)
class MipPyramid:
    """Box-filtered downsample chain; level 0 is the source volume."""

    levels: tuple[Volume, ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("pyramid needs at least level 0")

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def level(self, k: int) -> Volume:
        return self.levels[min(max(k, 0), self.max_level)]


@dataclass(frozen=True)
class LUT:
    """256-entry RGBA transfer table, channels in [0, 1]."""

    name: str
    entries: np.ndarray  # float32 (256, 4)

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.entries, dtype=np.float32)
        if arr.shape != (256, 4):
            raise ValueError(f"LUT needs exactly 256 RGBA entries, got shape {arr.shape}")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("LUT channels must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)


def normalize(
    raw_scalars: np.ndarray,
    policy: str | tuple = "minmax",
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Volume:
    """Map raw scalars into [0, 1] densities.

    ``policy`` is ``"minmax"`` or ``("percentile", p_lo, p_hi)``. Values
    outside the percentile window are clamped. A constant input maps to
    all-zero densities with source_range recording the constant.
    """
    raw = np.asarray(raw_scalars)
    if raw.size == 0:
        raise ValueError("cannot normalize an empty array")
    as_f64 = raw.astype(np.float64, copy=False)
    finite = np.isfinite(as_f64)
    if not finite.all():
        index = np.unravel_index(int(np.argmin(finite)), raw.shape)
        raise FormatError(f"non-finite value at index {tuple(int(i) for i in index)}")

    if policy == "minmax":
        lo, hi = float(as_f64.min()), float(as_f64.max())
    elif isinstance(policy, tuple) and len(policy) == 3 and policy[0] == "percentile":
        p_lo, p_hi = float(policy[1]), float(policy[2])
        if not (0.0 <= p_lo < p_hi <= 100.0):
            raise ValueError(f"percentile bounds out of order: {policy}")
        lo, hi = (float(v) for v in np.percentile(as_f64, [p_lo, p_hi]))
    else:
        raise ValueError(f"unknown normalization policy: {policy!r}")

    if hi <= lo:
        densities = np.zeros(raw.shape, dtype=np.float32)
    else:
        densities = np.clip((as_f64 - lo) / (hi - lo), 0.0, 1.0).astype(np.float32)
    return Volume(data=densities, spacing=spacing, source_range=(lo, hi))


def sample_trilinear_many(
    data: np.ndarray, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """Trilinear blend at continuous voxel coords; 0 outside [0, dim-1]^3."""
    nz, ny, nx = data.shape
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    inside = (
        (x >= 0.0) & (x <= nx - 1) & (y >= 0.0) & (y <= ny - 1) & (z >= 0.0) & (z <= nz - 1)
    )
    xc = np.clip(x, 0.0, nx - 1)
    yc = np.clip(y, 0.0, ny - 1)
    zc = np.clip(z, 0.0, nz - 1)
    # floor clamped so index+1 stays valid; fractional part then spans [0, 1]
    x0 = np.clip(np.floor(xc), 0, max(nx - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(yc), 0, max(ny - 2, 0)).astype(np.intp)
    z0 = np.clip(np.floor(zc), 0, max(nz - 2, 0)).astype(np.intp)
    fx = xc - x0
    fy = yc - y0
    fz = zc - z0
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)

    c000 = data[z0, y0, x0]
    c100 = data[z0, y0, x1]
    c010 = data[z0, y1, x0]
    c110 = data[z0, y1, x1]
    c001 = data[z1, y0, x0]
    c101 = data[z1, y0, x1]
    c011 = data[z1, y1, x0]
    c111 = data[z1, y1, x1]

    c00 = c000 * (1.0 - fx) + c100 * fx
    c10 = c010 * (1.0 - fx) + c110 * fx
    c01 = c001 * (1.0 - fx) + c101 * fx
    c11 = c011 * (1.0 - fx) + c111 * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    out = c0 * (1.0 - fz) + c1 * fz
    return np.where(inside, out, 0.0)


def sample_trilinear(volume: Volume, point: tuple[float, float, float]) -> float:
    """Sample one continuous voxel coordinate (x, y, z)."""
    x, y, z = point
    return float(
        sample_trilinear_many(
            volume.data, np.asarray([x]), np.asarray([y]), np.asarray([z])
        )[0]
    )


def _halve_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """Mean of consecutive pairs along axis; a trailing odd element stands alone."""
    n = arr.shape[axis]
    starts = np.arange(0, n, 2)
    sums = np.add.reduceat(arr.astype(np.float64), starts, axis=axis)
    counts = np.minimum(starts + 2, n) - starts
    shape = [1, 1, 1]
    shape[axis] = len(starts)
    return sums / counts.reshape(shape)


def build_mip_pyramid(volume: Volume) -> MipPyramid:
    """Halve each dim (ceil) with box averaging until max(dims) <= 4."""
    levels = [volume]
    current = volume
    while max(current.dims) > MIP_MIN_DIM:
        arr = current.data
        for axis in range(3):
            if arr.shape[axis] > 1:
                arr = _halve_axis(arr, axis)
        current = Volume(
            data=np.clip(arr, 0.0, 1.0).astype(np.float32),
            spacing=tuple(s * 2.0 for s in current.spacing),
            source_range=volume.source_range,
        )
        levels.append(current)
    return MipPyramid(levels=tuple(levels))


def lut_apply_many(lut: LUT, densities: np.ndarray) -> np.ndarray:
    """Vectorized transfer lookup -> (..., 4) RGBA floats."""
    d = np.clip(np.asarray(densities, dtype=np.float64), 0.0, 1.0)
    t = d * 255.0
    i0 = np.clip(np.floor(t), 0, 254).astype(np.intp)
    frac = (t - i0)[..., None]
    e = lut.entries.astype(np.float64)
    return e[i0] * (1.0 - frac) + e[i0 + 1] * frac


def lut_apply(lut: LUT, density: float) -> tuple[float, float, float, float]:
    """Linear interpolation between the two nearest of the 256 entries."""
    rgba = lut_apply_many(lut, np.asarray([density]))[0]
    return (float(rgba[0]), float(rgba[1]), float(rgba[2]), float(rgba[3]))


def _ramp_lut(name: str, anchors: list[tuple[int, tuple[float, float, float, float]]]) -> LUT:
    entries = np.zeros((256, 4), dtype=np.float32)
    idx = np.array([a[0] for a in anchors], dtype=np.float64)
    vals = np.array([a[1] for a in anchors], dtype=np.float64)
    for ch in range(4):
        entries[:, ch] = np.interp(np.arange(256), idx, vals[:, ch])
    return LUT(name=name, entries=entries)


def builtin_lut(name: str) -> LUT:
    """Built-in transfer tables: grayscale, grayscale_inverted, fire."""
    t = np.arange(256, dtype=np.float32) / 255.0
    if name == "grayscale":
        return LUT(name=name, entries=np.stack([t, t, t, t], axis=1))
    if name == "grayscale_inverted":
        return LUT(name=name, entries=np.stack([1.0 - t, 1.0 - t, 1.0 - t, t], axis=1))
    if name == "fire":
        return _ramp_lut(
            "fire",
            [
                (0, (0.0, 0.0, 0.0, 0.0)),
                (64, (0.55, 0.0, 0.0, 0.25)),
                (128, (1.0, 0.3, 0.0, 0.5)),
                (192, (1.0, 0.8, 0.1, 0.75)),
                (255, (1.0, 1.0, 0.9, 1.0)),
            ],
        )
    raise KeyError(f"unknown builtin LUT: {name!r}")


BUILTIN_LUT_NAMES = ("grayscale", "grayscale_inverted", "fire")
