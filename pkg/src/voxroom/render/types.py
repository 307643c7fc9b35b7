"""Renderer domain types: camera, visualization parameters, materials, frames."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from ..volume import LUT, builtin_lut

QUALITY_SAMPLES_PER_VOXEL = {"low": 0.5, "medium": 1.0, "high": 2.0}
QUALITY_ORDER = ("low", "medium", "high")


def _unit(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(arr))
    if n < 1e-12:
        raise ValueError("zero-length direction")
    return arr / n


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; forward/up are re-orthonormalized on construction."""

    position: tuple[float, float, float]
    forward: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    vertical_fov: float = math.radians(45.0)
    width: int = 256
    height: int = 256

    def __post_init__(self) -> None:
        if not (0.0 < self.vertical_fov < math.pi):
            raise ValueError(f"fov must be in (0, pi), got {self.vertical_fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        fwd = _unit(self.forward)
        up = _unit(self.up)
        if abs(float(np.dot(fwd, up))) > 1.0 - 1e-9:
            raise ValueError("forward and up are collinear")
        up = _unit(up - np.dot(up, fwd) * fwd)
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "forward", tuple(float(x) for x in fwd))
        object.__setattr__(self, "up", tuple(float(x) for x in up))

    @classmethod
    def look_at(
        cls,
        position,
        target,
        up=(0.0, 1.0, 0.0),
        vertical_fov: float = math.radians(45.0),
        width: int = 256,
        height: int = 256,
    ) -> "Camera":
        fwd = _unit(np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64))
        up_arr = np.asarray(up, dtype=np.float64)
        if abs(float(np.dot(fwd, _unit(up_arr)))) > 1.0 - 1e-9:
            up_arr = np.array([0.0, 0.0, 1.0]) if abs(fwd[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
        return cls(
            position=tuple(position), forward=tuple(fwd), up=tuple(up_arr),
            vertical_fov=vertical_fov, width=width, height=height,
        )

    def ray_directions(self) -> np.ndarray:
        """Unit direction per pixel, shape (height, width, 3), row 0 at top."""
        fwd = np.asarray(self.forward)
        up = np.asarray(self.up)
        right = np.cross(fwd, up)
        tan_half = math.tan(self.vertical_fov / 2.0)
        aspect = self.width / self.height
        xs = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * tan_half * aspect
        ys = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * tan_half
        dirs = (
            fwd[None, None, :]
            + xs[None, :, None] * right[None, None, :]
            + ys[:, None, None] * up[None, None, :]
        )
        return dirs / np.linalg.norm(dirs, axis=2, keepdims=True)


@dataclass(frozen=True)
class ExclusionPlane:
    """Samples on the positive side (normal . p > offset) are skipped."""

    normal: tuple[float, float, float]
    offset: float = 0.0
    enabled: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "normal", tuple(float(x) for x in _unit(self.normal)))
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class VizParams:
    lut: LUT = field(default_factory=lambda: builtin_lut("grayscale"))
    opacity_scale: float = 1.0
    quality: str = "medium"
    planes: tuple[ExclusionPlane, ...] = ()
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.opacity_scale <= 1.0):
            raise ValueError(f"opacity_scale must be in [0, 1], got {self.opacity_scale}")
        if self.quality not in QUALITY_SAMPLES_PER_VOXEL:
            raise ValueError(f"quality must be one of {QUALITY_ORDER}, got {self.quality!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "planes", tuple(self.planes))

    @property
    def samples_per_voxel(self) -> float:
        return QUALITY_SAMPLES_PER_VOXEL[self.quality]

    def active_planes(self) -> tuple[ExclusionPlane, ...]:
        return tuple(p for p in self.planes if p.enabled)


@dataclass(frozen=True)
class MaterialPreset:
    name: str
    base_color: tuple[float, float, float, float]
    specular_strength: float
    shininess: float
    alpha: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("material alpha must be in (0, 1]")


MATERIAL_PRESETS = {
    "default_gray": MaterialPreset("default_gray", (0.62, 0.62, 0.62, 1.0), 0.25, 16.0, 1.0),
    "glass": MaterialPreset("glass", (0.80, 0.90, 0.95, 1.0), 0.90, 64.0, 0.4),
    "water": MaterialPreset("water", (0.40, 0.60, 0.90, 1.0), 0.70, 48.0, 0.55),
    "crystal": MaterialPreset("crystal", (0.85, 0.80, 1.00, 1.0), 1.00, 96.0, 0.5),
    "pearl": MaterialPreset("pearl", (0.93, 0.90, 0.84, 1.0), 0.80, 32.0, 1.0),
}


@dataclass(frozen=True)
class Frame:
    """RGBA8 image, pixels shape (height, width, 4), row-major from the top."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 4):
            raise ValueError(f"pixel buffer {px.shape} != (h={self.height}, w={self.width}, 4)")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    def to_png(self) -> bytes:
        out = io.BytesIO()
        Image.fromarray(self.pixels, mode="RGBA").save(out, format="PNG")
        return out.getvalue()

    @classmethod
    def from_png(cls, data: bytes) -> "Frame":
        img = Image.open(io.BytesIO(data)).convert("RGBA")
        px = np.asarray(img, dtype=np.uint8)
        return cls(width=img.width, height=img.height, pixels=px)

    @classmethod
    def from_float_rgba(cls, rgba: np.ndarray) -> "Frame":
        """Quantize (h, w, 4) floats in [0, 1] to RGBA8."""
        px = np.round(np.clip(rgba, 0.0, 1.0) * 255.0).astype(np.uint8)
        return cls(width=rgba.shape[1], height=rgba.shape[0], pixels=px)


def frame_mean_abs_diff(a: Frame, b: Frame) -> float:
    """Mean |channel difference| in [0, 1] units."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError("frame sizes differ")
    return float(
        np.abs(a.pixels.astype(np.int16) - b.pixels.astype(np.int16)).mean() / 255.0
    )


def frame_psnr(reference: Frame, other: Frame) -> float:
    """Peak signal-to-noise ratio in dB (inf for identical frames)."""
    if (reference.width, reference.height) != (other.width, other.height):
        raise ValueError("frame sizes differ")
    diff = reference.pixels.astype(np.float64) - other.pixels.astype(np.float64)
    mse = float((diff**2).mean())
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(255.0**2 / mse)
