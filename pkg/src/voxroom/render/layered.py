"""Baseline layered compositor: view-aligned slices blended back to front.

This mirrors the plane-stack approach the ray marcher replaced; both
discretize the same emission-absorption integral, so at matched sampling
they must agree closely. Kept for cross-validation.
"""

from __future__ import annotations

import numpy as np

from ..volume import MipPyramid, Volume, build_mip_pyramid, lut_apply_many
from .raymarch import _excluded_mask, _VolumeFrame, select_mip_level
from .types import Camera, Frame, VizParams


def layer_count_matching(volume: Volume, camera: Camera, viz: VizParams) -> int:
    """Slice count whose slab thickness equals the ray marcher's step."""
    frame = _VolumeFrame(volume, None, viz.scale)
    fwd = np.asarray(camera.forward)
    pos = np.asarray(camera.position)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    ) * frame.half
    depths = (corners - pos) @ fwd
    span = float(depths.max() - max(depths.min(), 0.0))
    step = frame.voxel_world_size / viz.samples_per_voxel
    return max(1, int(np.ceil(span / step)))


def render_layered_frame(
    volume: Volume,
    camera: Camera,
    viz: VizParams,
    n_slices: int,
    pyramid: MipPyramid | None = None,
) -> Frame:
    """Composite ``n_slices`` camera-facing planes with the ray marcher's
    LUT/opacity semantics. ``n_slices == 0`` yields a transparent frame."""
    if camera.width < 1 or camera.height < 1:
        raise ValueError("zero-size image")
    rgba = np.zeros((camera.height, camera.width, 4))
    if n_slices <= 0:
        return Frame.from_float_rgba(rgba)
    if pyramid is None:
        pyramid = build_mip_pyramid(volume)
    frame = _VolumeFrame(volume, pyramid, viz.scale)

    fwd = np.asarray(camera.forward)
    pos = np.asarray(camera.position)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    ) * frame.half
    depths = (corners - pos) @ fwd
    d_near = max(float(depths.min()), 1e-9)
    d_far = float(depths.max())
    if d_far <= d_near:
        return Frame.from_float_rgba(rgba)

    slab = (d_far - d_near) / n_slices
    level = select_mip_level(slab, frame.voxel_world_size, frame.pyramid.max_level)

    dirs = camera.ray_directions().reshape(-1, 3)
    cos = dirs @ fwd  # per-ray depth-to-distance stretch
    color = np.zeros((len(dirs), 3))
    alpha = np.zeros(len(dirs))
    thickness = slab / cos
    exponent = thickness / frame.voxel_world_size

    for k in range(n_slices - 1, -1, -1):  # back to front
        depth = d_near + (k + 0.5) * slab
        t = depth / cos
        points = pos[None, :] + dirs * t[:, None]
        density = frame.sample_level(level, points)
        if viz.active_planes():
            density = np.where(_excluded_mask(points, viz), 0.0, density)
        sample = lut_apply_many(viz.lut, density)
        a = sample[:, 3] * viz.opacity_scale
        a_step = 1.0 - np.power(1.0 - a, exponent)
        color = a_step[:, None] * sample[:, :3] + (1.0 - a_step)[:, None] * color
        alpha = a_step + (1.0 - a_step) * alpha

    rgba[..., :3] = color.reshape(camera.height, camera.width, 3)
    rgba[..., 3] = alpha.reshape(camera.height, camera.width)
    return Frame.from_float_rgba(rgba)
