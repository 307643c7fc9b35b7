"""First-hit ray-cast mesh rendering with Lambert + Blinn-Phong shading.

Rays traverse a median-split BVH in batches (node-at-a-time over ray index
arrays), which keeps the cost of desk-scale meshes acceptable without a
rasterizer. Translucent materials blend the first two hits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh import Mesh
from .types import Camera, Frame, MaterialPreset

LEAF_SIZE = 8
AMBIENT = 0.1
HIT_EPSILON = 1e-6


@dataclass(frozen=True)
class DirectionalLight:
    """Light travelling along ``direction`` with scalar intensity."""

    direction: tuple[float, float, float]
    intensity: float = 1.0


class TriangleBVH:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        tris = mesh.triangles
        self.v0 = mesh.vertices[tris[:, 0]]
        self.e1 = mesh.vertices[tris[:, 1]] - self.v0
        self.e2 = mesh.vertices[tris[:, 2]] - self.v0
        m = len(tris)
        self.order = np.arange(m)
        self.node_min: list[np.ndarray] = []
        self.node_max: list[np.ndarray] = []
        self.node_left: list[int] = []
        self.node_right: list[int] = []
        self.node_start: list[int] = []
        self.node_count: list[int] = []
        if m:
            corners = mesh.vertices[tris]  # (m, 3, 3)
            self.tri_min = corners.min(axis=1)
            self.tri_max = corners.max(axis=1)
            centroids = corners.mean(axis=1)
            self._build(0, m, centroids)

    def _build(self, start: int, end: int, centroids: np.ndarray) -> int:
        node = len(self.node_min)
        span = self.order[start:end]
        self.node_min.append(self.tri_min[span].min(axis=0))
        self.node_max.append(self.tri_max[span].max(axis=0))
        self.node_left.append(-1)
        self.node_right.append(-1)
        self.node_start.append(start)
        self.node_count.append(end - start)
        if end - start > LEAF_SIZE:
            c = centroids[span]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (end - start) // 2
            part = np.argpartition(c[:, axis], mid)
            self.order[start:end] = span[part]
            self.node_count[node] = 0
            self.node_left[node] = self._build(start, start + mid, centroids)
            self.node_right[node] = self._build(start + mid, end, centroids)
        return node

    def intersect(
        self, origin: np.ndarray, dirs: np.ndarray, t_min: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Nearest hit beyond t_min per ray -> (t, triangle id, u, v)."""
        n = len(dirs)
        best_t = np.full(n, np.inf)
        best_tri = np.full(n, -1, dtype=np.int64)
        best_u = np.zeros(n)
        best_v = np.zeros(n)
        if not self.node_min:
            return best_t, best_tri, best_u, best_v
        with np.errstate(divide="ignore"):
            inv = np.where(np.abs(dirs) > 1e-300, 1.0 / dirs, np.inf)
        stack: list[tuple[int, np.ndarray]] = [(0, np.arange(n))]
        while stack:
            node, rays = stack.pop()
            sub_o = origin[None, :]
            ta = (self.node_min[node] - sub_o) * inv[rays]
            tb = (self.node_max[node] - sub_o) * inv[rays]
            near = np.minimum(ta, tb).max(axis=1)
            far = np.maximum(ta, tb).min(axis=1)
            alive = (far >= np.maximum(near, 0.0)) & (near < best_t[rays])
            rays = rays[alive]
            if not len(rays):
                continue
            count = self.node_count[node]
            if count == 0:
                stack.append((self.node_left[node], rays))
                stack.append((self.node_right[node], rays))
                continue
            start = self.node_start[node]
            tri_ids = self.order[start : start + count]
            self._leaf_hits(origin, dirs, rays, tri_ids, t_min, best_t, best_tri, best_u, best_v)
        return best_t, best_tri, best_u, best_v

    def _leaf_hits(self, origin, dirs, rays, tri_ids, t_min, best_t, best_tri, best_u, best_v):
        # Moeller-Trumbore, rays x leaf triangles
        d = dirs[rays][:, None, :]
        v0 = self.v0[tri_ids][None, :, :]
        e1 = self.e1[tri_ids][None, :, :]
        e2 = self.e2[tri_ids][None, :, :]
        pvec = np.cross(d, e2)
        det = np.einsum("rtk,rtk->rt", pvec, np.broadcast_to(e1, pvec.shape))
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_det = np.where(np.abs(det) > 1e-12, 1.0 / det, 0.0)
        tvec = origin[None, None, :] - v0
        u = np.einsum("rtk,rtk->rt", tvec * np.ones_like(pvec), pvec) * inv_det
        qvec = np.cross(np.broadcast_to(tvec, pvec.shape), e1)
        v = np.einsum("rtk,rtk->rt", np.broadcast_to(d, qvec.shape), qvec) * inv_det
        t = np.einsum("rtk,rtk->rt", np.broadcast_to(e2, qvec.shape), qvec) * inv_det
        valid = (
            (np.abs(det) > 1e-12)
            & (u >= -1e-9)
            & (v >= -1e-9)
            & (u + v <= 1.0 + 1e-9)
            & (t > t_min[rays][:, None])
            & (t < best_t[rays][:, None])
        )
        t = np.where(valid, t, np.inf)
        best_local = np.argmin(t, axis=1)
        rows = np.arange(len(rays))
        t_best = t[rows, best_local]
        improved = np.isfinite(t_best)
        sel = rays[improved]
        pick = best_local[improved]
        best_t[sel] = t_best[improved]
        best_tri[sel] = tri_ids[pick]
        best_u[sel] = u[rows[improved], pick]
        best_v[sel] = v[rows[improved], pick]


def shade_flat(
    material: MaterialPreset,
    normal: np.ndarray,
    view_dir: np.ndarray,
    lights: tuple[DirectionalLight, ...],
) -> np.ndarray:
    """Lambert + Blinn-Phong color for a unit normal and unit view direction
    (view_dir points from surface toward the eye)."""
    n = np.asarray(normal, dtype=np.float64)
    v = np.asarray(view_dir, dtype=np.float64)
    base = np.asarray(material.base_color[:3])
    color = base * AMBIENT
    for light in lights:
        l_vec = -np.asarray(light.direction, dtype=np.float64)
        l_vec = l_vec / np.linalg.norm(l_vec)
        diffuse = max(float(n @ l_vec), 0.0)
        h = l_vec + v
        h = h / max(np.linalg.norm(h), 1e-12)
        spec = max(float(n @ h), 0.0) ** material.shininess
        color = color + base * (1.0 - AMBIENT) * diffuse * light.intensity
        color = color + material.specular_strength * spec * light.intensity
    return np.clip(color, 0.0, 1.0)


def _shade_hits(mesh, bvh, material, lights, origin, dirs, rays, t, tri, u, v):
    """Vectorized shading of confirmed hits -> (len(rays), 3)."""
    tris = mesh.triangles[tri]
    if mesh.normals is not None:
        n0 = mesh.normals[tris[:, 0]]
        n1 = mesh.normals[tris[:, 1]]
        n2 = mesh.normals[tris[:, 2]]
        w = (1.0 - u - v)[:, None]
        normals = n0 * w + n1 * u[:, None] + n2 * v[:, None]
    else:
        normals = np.cross(bvh.e1[tri], bvh.e2[tri])
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    lengths[lengths < 1e-12] = 1.0
    normals = normals / lengths
    d = dirs[rays]
    facing = np.einsum("ij,ij->i", normals, d) > 0.0
    normals[facing] *= -1.0  # always shade the side facing the eye

    base = np.asarray(material.base_color[:3])
    color = np.broadcast_to(base * AMBIENT, (len(rays), 3)).copy()
    view = -d
    for light in lights:
        l_vec = -np.asarray(light.direction, dtype=np.float64)
        l_vec = l_vec / np.linalg.norm(l_vec)
        diffuse = np.maximum(normals @ l_vec, 0.0)
        h = l_vec[None, :] + view
        h = h / np.maximum(np.linalg.norm(h, axis=1, keepdims=True), 1e-12)
        spec = np.maximum(np.einsum("ij,ij->i", normals, h), 0.0) ** material.shininess
        color = color + base[None, :] * (1.0 - AMBIENT) * diffuse[:, None] * light.intensity
        color = color + material.specular_strength * spec[:, None] * light.intensity
    return np.clip(color, 0.0, 1.0)


def render_mesh_frame(
    mesh: Mesh,
    camera: Camera,
    material: MaterialPreset,
    lights: tuple[DirectionalLight, ...] | None = None,
) -> Frame:
    """Ray-cast the mesh; materials with alpha < 1 blend the first two hits."""
    if camera.width < 1 or camera.height < 1:
        raise ValueError("zero-size image")
    rgba = np.zeros((camera.height, camera.width, 4))
    if mesh.triangle_count == 0:
        return Frame.from_float_rgba(rgba)
    if lights is None:
        lights = (DirectionalLight(direction=camera.forward),)

    bvh = TriangleBVH(mesh)
    origin = np.asarray(camera.position)
    dirs = camera.ray_directions().reshape(-1, 3)
    n = len(dirs)

    t1, tri1, u1, v1 = bvh.intersect(origin, dirs, np.zeros(n))
    hit1 = tri1 >= 0
    color = np.zeros((n, 3))
    alpha = np.zeros(n)
    if hit1.any():
        rays = np.nonzero(hit1)[0]
        c1 = _shade_hits(mesh, bvh, material, lights, origin, dirs, rays,
                         t1[rays], tri1[rays], u1[rays], v1[rays])
        if material.alpha >= 1.0:
            color[rays] = c1
            alpha[rays] = 1.0
        else:
            t_min = np.full(n, np.inf)
            t_min[rays] = t1[rays] + HIT_EPSILON
            t2, tri2, u2, v2 = bvh.intersect(origin, dirs, t_min)
            hit2 = tri2 >= 0
            a = material.alpha
            color[rays] = a * c1
            alpha[rays] = a
            rays2 = np.nonzero(hit2)[0]
            if len(rays2):
                c2 = _shade_hits(mesh, bvh, material, lights, origin, dirs, rays2,
                                 t2[rays2], tri2[rays2], u2[rays2], v2[rays2])
                color[rays2] += (1.0 - a) * c2  # second hit treated opaque
                alpha[rays2] = a + (1.0 - a)

    rgba[..., :3] = color.reshape(camera.height, camera.width, 3)
    rgba[..., 3] = alpha.reshape(camera.height, camera.width)
    return Frame.from_float_rgba(rgba)
