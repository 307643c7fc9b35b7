"""Triangle mesh domain type shared by loaders, extraction and rendering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh; normals are per-vertex unit vectors when present."""

    vertices: np.ndarray  # float64 (n, 3)
    triangles: np.ndarray  # int64 (m, 3)
    normals: np.ndarray | None = None  # float64 (n, 3) unit length

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise IndexError(f"triangle index out of range (have {len(v)} vertices)")
        n = self.normals
        if n is not None:
            n = np.ascontiguousarray(n, dtype=np.float64).reshape(-1, 3)
            if n.shape != v.shape:
                raise ValueError("normals must be per-vertex")
            lengths = np.linalg.norm(n, axis=1)
            if n.size and np.abs(lengths - 1.0).max() > 1e-4:
                raise ValueError("normals must be unit length")
            n.setflags(write=False)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "normals", n)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length.

    Vertices with no incident area fall back to +z so the unit invariant holds.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    normals = np.zeros_like(vertices)
    if len(triangles):
        a = vertices[triangles[:, 0]]
        b = vertices[triangles[:, 1]]
        c = vertices[triangles[:, 2]]
        face = np.cross(b - a, c - a)  # length = 2 * area, so this is area weighting
        for k in range(3):
            np.add.at(normals, triangles[:, k], face)
    lengths = np.linalg.norm(normals, axis=1)
    degenerate = lengths < 1e-12
    normals[degenerate] = (0.0, 0.0, 1.0)
    lengths[degenerate] = 1.0
    return normals / lengths[:, None]
