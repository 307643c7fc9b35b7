"""Wavefront OBJ (v/vn/f subset) and STL (binary + ASCII) mesh I/O."""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError, ParseError, SizeError
from ..mesh import Mesh, compute_vertex_normals

DEDUP_DECIMALS = 6  # vertex positions equal within 1e-6 share an index


def _resolve_index(token: str, count: int, line_no: int) -> int:
    try:
        idx = int(token)
    except ValueError as exc:
        raise ParseError(f"line {line_no}: bad face index {token!r}") from exc
    if idx < 0:
        idx = count + idx
    else:
        idx = idx - 1
    if not (0 <= idx < count):
        raise IndexError(f"line {line_no}: face index {token} out of range (have {count})")
    return idx


def load_obj(text: str) -> Mesh:
    """Parse the v/vn/f subset; polygons are fan-triangulated.

    Negative indices count back from the running vertex total. Normals are
    taken from vn when every face corner references one, otherwise computed
    by area-weighted face averaging.
    """
    vertices: list[tuple[float, float, float]] = []
    file_normals: list[tuple[float, float, float]] = []
    normal_of_vertex: dict[int, int] = {}
    faces: list[tuple[int, int, int]] = []
    all_corners_have_normals = True

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError(f"line {line_no}: vertex needs 3 coordinates")
            vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
        elif tag == "vn":
            if len(parts) < 4:
                raise ParseError(f"line {line_no}: normal needs 3 components")
            file_normals.append((float(parts[1]), float(parts[2]), float(parts[3])))
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError(f"line {line_no}: face needs at least 3 corners")
            corner_ids = []
            for token in parts[1:]:
                fields = token.split("/")
                v_idx = _resolve_index(fields[0], len(vertices), line_no)
                if len(fields) >= 3 and fields[2]:
                    n_idx = _resolve_index(fields[2], len(file_normals), line_no)
                    normal_of_vertex[v_idx] = n_idx
                else:
                    all_corners_have_normals = False
                corner_ids.append(v_idx)
            for k in range(1, len(corner_ids) - 1):
                faces.append((corner_ids[0], corner_ids[k], corner_ids[k + 1]))
        # other tags (o, g, usemtl, s, vt, mtllib) are ignored

    if not faces:
        raise ParseError("OBJ contains no faces")
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(faces, dtype=np.int64)
    if all_corners_have_normals and len(normal_of_vertex) == len(v) and file_normals:
        n = np.asarray(file_normals, dtype=np.float64)
        per_vertex = np.zeros_like(v)
        for v_idx, n_idx in normal_of_vertex.items():
            per_vertex[v_idx] = n[n_idx]
        lengths = np.linalg.norm(per_vertex, axis=1)
        lengths[lengths < 1e-12] = 1.0
        normals = per_vertex / lengths[:, None]
    else:
        normals = compute_vertex_normals(v, t)
    return Mesh(vertices=v, triangles=t, normals=normals)


def save_obj(mesh: Mesh) -> str:
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    if mesh.normals is not None:
        for x, y, z in mesh.normals:
            lines.append(f"vn {x:.9g} {y:.9g} {z:.9g}")
        for a, b, c in mesh.triangles + 1:
            lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
    else:
        for a, b, c in mesh.triangles + 1:
            lines.append(f"f {a} {b} {c}")
    return "\n".join(lines) + "\n"


def _dedup_triangle_soup(points: np.ndarray) -> Mesh:
    """Index a (3n, 3) corner soup, merging positions equal within 1e-6."""
    keys = np.round(points, DEDUP_DECIMALS)
    _, first_idx, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    vertices = points[first_idx]
    triangles = inverse.reshape(-1, 3).astype(np.int64)
    normals = compute_vertex_normals(vertices, triangles)
    return Mesh(vertices=vertices, triangles=triangles, normals=normals)


def load_stl(data: bytes) -> Mesh:
    """Auto-detect binary vs ASCII STL and parse to an indexed mesh."""
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return _load_stl_binary(data, count)
        if not data.lstrip()[:5].lower() == b"solid":
            raise SizeError(
                f"binary STL declares {count} triangles "
                f"({84 + 50 * count} bytes) but file is {len(data)} bytes"
            )
    text = data.decode("latin1")
    if not text.lstrip().lower().startswith("solid"):
        raise FormatError("neither a binary nor an ASCII STL")
    return _load_stl_ascii(text)


def _load_stl_binary(data: bytes, count: int) -> Mesh:
    if count == 0:
        raise ParseError("STL contains no triangles")
    rec = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84).reshape(count, 50)
    floats = rec[:, :48].copy().view("<f4").reshape(count, 12).astype(np.float64)
    corners = floats[:, 3:12].reshape(-1, 3)  # skip the stored face normal
    return _dedup_triangle_soup(corners)


def _load_stl_ascii(text: str) -> Mesh:
    corners: list[list[float]] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        parts = raw_line.split()
        if parts[:1] == ["vertex"]:
            if len(parts) < 4:
                raise ParseError(f"line {line_no}: vertex needs 3 coordinates")
            corners.append([float(parts[1]), float(parts[2]), float(parts[3])])
    if not corners or len(corners) % 3 != 0:
        raise ParseError(f"ASCII STL has {len(corners)} vertices (not a multiple of 3)")
    return _dedup_triangle_soup(np.asarray(corners, dtype=np.float64))


def save_stl(mesh: Mesh) -> bytes:
    """Binary STL with face normals recomputed from winding."""
    tris = mesh.triangles
    out = bytearray(b"voxroom binary stl".ljust(80, b"\x00"))
    out += struct.pack("<I", len(tris))
    a = mesh.vertices[tris[:, 0]]
    b = mesh.vertices[tris[:, 1]]
    c = mesh.vertices[tris[:, 2]]
    n = np.cross(b - a, c - a)
    lengths = np.linalg.norm(n, axis=1)
    lengths[lengths < 1e-12] = 1.0
    n = n / lengths[:, None]
    for i in range(len(tris)):
        out += struct.pack("<12fH", *n[i], *a[i], *b[i], *c[i], 0)
    return bytes(out)
