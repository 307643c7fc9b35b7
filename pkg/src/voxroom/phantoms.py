"""Synthetic desk-scale test volumes: a smooth sphere and a parallel fiber bed.

Both give analytic ground truth (sphere volume/area, cylinder cross sections)
at sizes small enough for CI, standing in for tomography stacks that are far
too large to ship with tests.
"""

from __future__ import annotations

import warnings

import numpy as np

from .volume import Volume

FIBER_RETRY_BUDGET = 200


class PartialPlacementWarning(UserWarning):
    """Raised when fewer fibers fit than were requested."""


def generate_sphere_phantom(
    n: int, radius_fraction: float, spacing: float = 1.0
) -> Volume:
    """Centered sphere of radius ``radius_fraction * n / 2`` voxels.

    Density is 1 inside, 0 outside, with a one-voxel linear falloff so the
    0.5 isolevel sits exactly on the analytic sphere surface.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    radius = float(radius_fraction) * n / 2.0
    if radius <= 0.0:
        data = np.zeros((n, n, n), dtype=np.float32)
        return Volume(data=data, spacing=(spacing,) * 3, source_range=(0.0, 0.0))
    c = (n - 1) / 2.0
    ax = np.arange(n, dtype=np.float64) - c
    dist = np.sqrt(ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2)
    data = np.clip(radius - dist + 0.5, 0.0, 1.0).astype(np.float32)
    return Volume(data=data, spacing=(spacing,) * 3, source_range=(0.0, 1.0))


def generate_fiber_phantom(
    dims: tuple[int, int, int],
    n_fibers: int,
    mean_radius: float = 6.4,
    sd_radius: float = 0.9,
    seed: int = 0,
    bed_width: float = 1500.0,
) -> Volume:
    """Bed of parallel cylinders along z with Gaussian radii.

    Radii are in world units; spacing is chosen so the volume spans
    ``bed_width`` world units across x. Placement is rejection-sampled to
    avoid overlaps; if the retry budget runs out a PartialPlacementWarning
    reports how many fibers actually fit. Deterministic for a given seed.
    """
    nx, ny, nz = dims
    if min(dims) < 1:
        raise ValueError("dims must be >= 1 on every axis")
    spacing = float(bed_width) / nx
    plane = np.zeros((ny, nx), dtype=np.float64)
    if n_fibers <= 0:
        data = np.zeros((nz, ny, nx), dtype=np.float32)
        return Volume(data=data, spacing=(spacing,) * 3, source_range=(0.0, 0.0))

    rng = np.random.default_rng(seed)
    ys = np.arange(ny, dtype=np.float64)[:, None]
    xs = np.arange(nx, dtype=np.float64)[None, :]
    placed: list[tuple[float, float, float]] = []  # (cx, cy, r) in voxel units
    for _ in range(n_fibers):
        ok = False
        for _attempt in range(FIBER_RETRY_BUDGET):
            r_world = rng.normal(mean_radius, sd_radius)
            r = max(r_world, 0.25 * spacing) / spacing
            if 2.0 * r + 1.0 >= min(nx, ny):
                continue
            cx = rng.uniform(r, nx - 1 - r)
            cy = rng.uniform(r, ny - 1 - r)
            if all((cx - px) ** 2 + (cy - py) ** 2 > (r + pr) ** 2 for px, py, pr in placed):
                placed.append((cx, cy, r))
                ok = True
                break
        if not ok:
            warnings.warn(
                f"placed {len(placed)} of {n_fibers} fibers before exhausting retries",
                PartialPlacementWarning,
            )
            break

    for cx, cy, r in placed:
        dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
        np.maximum(plane, np.clip(r - dist + 0.5, 0.0, 1.0), out=plane)

    data = np.broadcast_to(plane.astype(np.float32), (nz, ny, nx)).copy()
    return Volume(data=data, spacing=(spacing,) * 3, source_range=(0.0, 1.0))
