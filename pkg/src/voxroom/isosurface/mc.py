"""Marching cubes over density volumes.

The volume is treated as padded with a one-voxel zero border, so any solid
that touches the boundary still yields a closed shell. Vertices are shared
by canonical grid-edge identity (not positional epsilon), which makes the
output watertight and deterministic by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh import Mesh, compute_vertex_normals
from ..volume import Volume
from .tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE


@dataclass(frozen=True)
class IsoResult:
    mesh: Mesh
    isovalue: float
    cell_count_visited: int


def _empty_mesh() -> Mesh:
    return Mesh(
        vertices=np.zeros((0, 3)), triangles=np.zeros((0, 3), dtype=np.int64),
        normals=None,
    )


def marching_cubes(volume: Volume, isovalue: float = 0.5) -> IsoResult:
    """Extract the isovalue surface; triangles wind counterclockwise seen
    from the low-density side, so solid interiors get outward normals.

    Vertex coordinates are in voxel units of the unpadded volume (the
    added zero border maps to coordinates just outside [0, dim-1]).
    """
    if not (0.0 < isovalue < 1.0):
        raise ValueError(f"isovalue must lie in (0, 1), got {isovalue}")

    grid = np.pad(volume.data.astype(np.float64), 1)
    gz, gy, gx = grid.shape
    ncx, ncy, ncz = gx - 1, gy - 1, gz - 1
    n_cells = ncx * ncy * ncz

    # Cube index per cell: bit i set when corner i is below the isovalue.
    index = np.zeros((ncz, ncy, ncx), dtype=np.uint16)
    for i, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        corner = grid[dz : dz + ncz, dy : dy + ncy, dx : dx + ncx]
        index |= (corner < isovalue).astype(np.uint16) << i

    crossed_bits = EDGE_TABLE[index]
    activez, activey, activex = np.nonzero(crossed_bits != 0)
    if len(activex) == 0:
        return IsoResult(mesh=_empty_mesh(), isovalue=float(isovalue), cell_count_visited=n_cells)

    a_idx = index[activez, activey, activex].astype(np.int64)
    a_bits = crossed_bits[activez, activey, activex]
    n_active = len(activex)

    corner_vals = np.empty((n_active, 8), dtype=np.float64)
    for i, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        corner_vals[:, i] = grid[activez + dz, activey + dy, activex + dx]

    # Interpolated vertex position and canonical global key per crossed edge.
    # Key axes: edges 0..7 run along x or y on the cell rings, 8..11 along z.
    edge_axis = np.array([0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2])
    positions = np.zeros((n_active, 12, 3), dtype=np.float64)
    keys = np.full((n_active, 12), -1, dtype=np.int64)
    cell_origin = np.stack([activex, activey, activez], axis=1).astype(np.float64)
    stride_x = gx + 1
    stride_y = gy + 1
    for e in range(12):
        mask = (a_bits & (1 << e)) != 0
        if not mask.any():
            continue
        ca, cb = EDGE_CORNERS[e]
        va = corner_vals[mask, ca]
        vb = corner_vals[mask, cb]
        denom = vb - va
        t = np.where(np.abs(denom) < 1e-300, 0.5, (isovalue - va) / np.where(denom == 0, 1.0, denom))
        t = np.clip(t, 0.0, 1.0)
        pa = CORNER_OFFSETS[ca].astype(np.float64)
        pb = CORNER_OFFSETS[cb].astype(np.float64)
        positions[mask, e, :] = cell_origin[mask] + pa + t[:, None] * (pb - pa)
        # lower corner of the edge in padded grid coords identifies it globally
        low = CORNER_OFFSETS[ca] if tuple(CORNER_OFFSETS[ca]) <= tuple(CORNER_OFFSETS[cb]) else CORNER_OFFSETS[cb]
        ox = activex[mask] + low[0]
        oy = activey[mask] + low[1]
        oz = activez[mask] + low[2]
        keys[mask, e] = ((edge_axis[e] * (gz + 1) + oz) * stride_y + oy) * stride_x + ox

    # Triangle fan-out from the case table, then vertex dedup by edge key.
    tri_edges = TRI_TABLE[a_idx]  # (n_active, 16)
    valid = tri_edges >= 0
    cell_of = np.broadcast_to(np.arange(n_active)[:, None], tri_edges.shape)[valid]
    edge_of = tri_edges[valid]
    flat_keys = keys[cell_of, edge_of]
    flat_pos = positions[cell_of, edge_of]

    unique_keys, inverse = np.unique(flat_keys, return_inverse=True)
    vertices = np.zeros((len(unique_keys), 3), dtype=np.float64)
    vertices[inverse] = flat_pos  # identical key -> identical position by construction
    triangles = inverse.reshape(-1, 3).astype(np.int64)

    # Shift out of the padded frame back into source voxel coordinates.
    vertices -= 1.0
    normals = compute_vertex_normals(vertices, triangles)
    mesh = Mesh(vertices=vertices, triangles=triangles, normals=normals)
    return IsoResult(mesh=mesh, isovalue=float(isovalue), cell_count_visited=n_cells)


def mesh_stats(mesh: Mesh) -> dict:
    """Counts and topology summary: boundary edges and Euler characteristic."""
    if mesh.triangle_count == 0:
        return {
            "triangle_count": 0,
            "bbox": ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
            "boundary_edge_count": 0,
            "euler_characteristic": 0,
        }
    tris = mesh.triangles
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    used = np.unique(tris)
    v = len(used)
    e = len(counts)
    f = len(tris)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return {
        "triangle_count": f,
        "bbox": (tuple(float(x) for x in lo), tuple(float(x) for x in hi)),
        "boundary_edge_count": int((counts == 1).sum()),
        "euler_characteristic": int(v - e + f),
    }


def surface_area(mesh: Mesh) -> float:
    if mesh.triangle_count == 0:
        return 0.0
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())


def signed_volume(mesh: Mesh) -> float:
    """Divergence-theorem volume; positive for outward-oriented solids."""
    if mesh.triangle_count == 0:
        return 0.0
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)
