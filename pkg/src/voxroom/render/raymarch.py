"""Front-to-back ray marching with transfer-function shading.

The volume's sampleable box ([0, dim-1] voxel coordinates per axis) is
centered at the world origin and scaled by spacing and the viz scale. Every
mip level maps onto that same world box, so forcing a level never moves the
volume, and constant volumes render identically at every level.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..volume import MipPyramid, Volume, build_mip_pyramid, lut_apply_many, sample_trilinear_many
from .types import Camera, Frame, VizParams

EARLY_EXIT_ALPHA = 0.99


def select_mip_level(step_world_size: float, voxel_world_size: float, max_level: int = 64) -> int:
    """clamp(floor(log2(step / voxel)), 0, max_level)."""
    if step_world_size <= 0 or voxel_world_size <= 0:
        raise ValueError("sizes must be positive")
    level = math.floor(math.log2(step_world_size / voxel_world_size))
    return int(min(max(level, 0), max_level))


class _VolumeFrame:
    """World-space frame of one volume + pyramid under given viz scale."""

    def __init__(self, volume: Volume, pyramid: MipPyramid | None, scale: float):
        self.volume = volume
        self.pyramid = pyramid if pyramid is not None else build_mip_pyramid(volume)
        nx, ny, nz = volume.dims
        sx, sy, sz = volume.spacing
        self.world_per_voxel = np.array([sx, sy, sz]) * scale
        self.half = np.array([(nx - 1) * sx, (ny - 1) * sy, (nz - 1) * sz]) * scale / 2.0
        self.voxel_world_size = float(min(volume.spacing)) * scale

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Slab test against the centered AABB -> (t_enter, t_exit) per ray."""
        t0 = np.zeros(len(dirs))
        t1 = np.full(len(dirs), np.inf)
        for axis in range(3):
            o = origin[axis]
            d = dirs[:, axis]
            h = self.half[axis]
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (-h - o) / d
                tb = (h - o) / d
            near = np.minimum(ta, tb)
            far = np.maximum(ta, tb)
            parallel = np.abs(d) < 1e-12
            inside_slab = (o >= -h) & (o <= h)
            near = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), far)
            t0 = np.maximum(t0, near)
            t1 = np.minimum(t1, far)
        return t0, t1

    def sample_level(self, level: int, points: np.ndarray) -> np.ndarray:
        """Density at world points from mip level, trilinear, 0 outside."""
        level = min(max(level, 0), self.pyramid.max_level)
        vol0 = self.pyramid.levels[0]
        volk = self.pyramid.levels[level]
        u0 = points / self.world_per_voxel + (np.array(vol0.dims) - 1) / 2.0
        d0 = np.maximum(np.array(vol0.dims, dtype=np.float64) - 1.0, 0.0)
        dk = np.array(volk.dims, dtype=np.float64) - 1.0
        ratio = np.divide(dk, d0, out=np.zeros(3), where=d0 > 0)
        uk = u0 * ratio
        return sample_trilinear_many(volk.data, uk[:, 0], uk[:, 1], uk[:, 2])


def _excluded_mask(points: np.ndarray, viz: VizParams) -> np.ndarray:
    excluded = np.zeros(len(points), dtype=bool)
    for plane in viz.active_planes():
        n = np.asarray(plane.normal)
        excluded |= points @ n - plane.offset > 0.0
    return excluded


def march_rays(
    origin,
    directions: np.ndarray,
    volume: Volume,
    viz: VizParams,
    pyramid: MipPyramid | None = None,
    early_exit: float | None = EARLY_EXIT_ALPHA,
    force_mip_level: int | None = None,
) -> np.ndarray:
    """March a batch of rays; returns (n, 4) float RGBA.

    Color channels are alpha-weighted accumulations (front-to-back "over"),
    alpha is total opacity. ``early_exit=None`` disables termination so
    closed-form transmittance checks see every sample.
    """
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    frame = _VolumeFrame(volume, pyramid, viz.scale)
    out = np.zeros((len(dirs), 4))

    t0, t1 = frame.intersect(origin, dirs)
    hit = t1 > t0
    if not hit.any():
        return out

    step_ref = frame.voxel_world_size
    step = step_ref / viz.samples_per_voxel
    exponent = step / step_ref
    if force_mip_level is not None:
        level = force_mip_level
    else:
        level = select_mip_level(step, step_ref, frame.pyramid.max_level)

    idx = np.nonzero(hit)[0]
    o = origin[None, :]
    d = dirs[idx]
    enter = t0[idx]
    span = t1[idx] - enter
    n_steps = int(np.ceil(span.max() / step))
    steps_of_ray = np.ceil(span / step).astype(np.int64)

    color = np.zeros((len(idx), 3))
    alpha = np.zeros(len(idx))
    for k in range(n_steps):
        live = steps_of_ray > k
        if early_exit is not None:
            live &= alpha < early_exit
        if not live.any():
            break
        t = enter[live] + (k + 0.5) * step
        points = o + d[live] * t[:, None]
        density = frame.sample_level(level, points)
        if viz.active_planes():
            density = np.where(_excluded_mask(points, viz), 0.0, density)
        rgba = lut_apply_many(viz.lut, density)
        a = rgba[:, 3] * viz.opacity_scale
        a_step = 1.0 - np.power(1.0 - a, exponent)
        remain = 1.0 - alpha[live]
        w = remain * a_step
        color[live] += w[:, None] * rgba[:, :3]
        alpha[live] += w

    out[idx, :3] = color
    out[idx, 3] = alpha
    return out


def raymarch_ray(
    origin,
    direction,
    volume: Volume,
    viz: VizParams,
    pyramid: MipPyramid | None = None,
    early_exit: float | None = EARLY_EXIT_ALPHA,
    force_mip_level: int | None = None,
) -> tuple[float, float, float, float]:
    """Single-ray convenience wrapper around :func:`march_rays`."""
    rgba = march_rays(
        origin,
        np.asarray(direction, dtype=np.float64).reshape(1, 3),
        volume,
        viz,
        pyramid=pyramid,
        early_exit=early_exit,
        force_mip_level=force_mip_level,
    )[0]
    return (float(rgba[0]), float(rgba[1]), float(rgba[2]), float(rgba[3]))


def render_volume_frame(
    volume: Volume,
    camera: Camera,
    viz: VizParams,
    pyramid: MipPyramid | None = None,
    workers: int = 1,
    force_mip_level: int | None = None,
) -> Frame:
    """Render the full pixel grid; deterministic for fixed inputs and any
    worker count (rows are partitioned, per-pixel math is identical)."""
    if camera.width < 1 or camera.height < 1:
        raise ValueError("zero-size image")
    if pyramid is None:
        pyramid = build_mip_pyramid(volume)
    dirs = camera.ray_directions()
    origin = np.asarray(camera.position)
    rgba = np.zeros((camera.height, camera.width, 4))

    def render_band(y0: int, y1: int) -> None:
        band = dirs[y0:y1].reshape(-1, 3)
        rgba[y0:y1] = march_rays(
            origin, band, volume, viz, pyramid=pyramid,
            force_mip_level=force_mip_level,
        ).reshape(y1 - y0, camera.width, 4)

    workers = max(1, int(workers))
    if workers == 1 or camera.height < 2 * workers:
        render_band(0, camera.height)
    else:
        bounds = np.linspace(0, camera.height, workers + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(render_band, int(bounds[i]), int(bounds[i + 1]))
                for i in range(workers)
                if bounds[i] < bounds[i + 1]
            ]
            for f in futures:
                f.result()
    return Frame.from_float_rgba(rgba)
