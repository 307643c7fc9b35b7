import io
import struct
import zipfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from voxroom.errors import (
    EmptyArchiveError,
    FormatError,
    ParseError,
    ShapeError,
    SizeError,
    UnsupportedError,
)
from voxroom.ingest import (
    LuminanceConversionWarning,
    RawDescriptor,
    load_lut_csv,
    load_obj,
    load_raw,
    load_stl,
    load_zip_stack,
    parse_npy,
    read_npy_array,
    save_obj,
    save_stl,
    write_npy,
    write_npy_array,
    write_zip_stack,
)
from voxroom.phantoms import generate_sphere_phantom
from voxroom.volume import lut_apply


def hand_built_npy_v1(descr: str, shape: tuple, payload: bytes) -> bytes:
    """Assemble NPY bytes directly from the published layout (independent
    of both numpy.save and our writer)."""
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}"
    base = 6 + 2 + 2  # magic + version + header-length field
    pad = (64 - (base + len(header) + 1) % 64) % 64
    header_full = header + " " * pad + "\n"
    return (
        b"\x93NUMPY"
        + bytes([1, 0])
        + struct.pack("<H", len(header_full))
        + header_full.encode("latin1")
        + payload
    )


class TestNpy:
    def test_hand_assembled_u8_cube(self):
        blob = hand_built_npy_v1("|u1", (2, 2, 2), bytes(range(8)))
        vol = parse_npy(blob)
        assert vol.dims == (2, 2, 2)
        np.testing.assert_allclose(vol.data.reshape(-1), np.arange(8) / 7.0, atol=1e-7)
        assert vol.source_range == (0.0, 7.0)

    def test_zip_magic_rejected(self):
        with pytest.raises(FormatError, match="magic"):
            parse_npy(b"PK\x03\x04" + bytes(64))

    def test_unsupported_dtype_reports_descriptor(self):
        blob = hand_built_npy_v1("<i8", (2,), bytes(16))
        with pytest.raises(UnsupportedError, match="<i8"):
            read_npy_array(blob)

    def test_non_3d_rejected(self):
        blob = hand_built_npy_v1("|u1", (4, 2), bytes(8))
        with pytest.raises(UnsupportedError, match="rank"):
            parse_npy(blob)

    def test_fortran_order_matches_c_order_logically(self):
        arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        f_payload = arr.flatten(order="F").tobytes()
        header = "{'descr': '|u1', 'fortran_order': True, 'shape': (2, 3, 4), }"
        pad = (64 - (10 + len(header) + 1) % 64) % 64
        blob = (
            b"\x93NUMPY\x01\x00"
            + struct.pack("<H", len(header) + pad + 1)
            + (header + " " * pad + "\n").encode()
            + f_payload
        )
        out = read_npy_array(blob)
        np.testing.assert_array_equal(out, arr)

    @settings(max_examples=30, deadline=None)
    @given(
        st.sampled_from(["u1", "u2", "f4"]),
        st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)),
        st.integers(0, 2**31),
    )
    def test_write_then_read_identity(self, kind, shape, seed):
        rng = np.random.default_rng(seed)
        if kind == "f4":
            arr = rng.random(shape, dtype=np.float32)
        else:
            dtype = np.uint8 if kind == "u1" else np.uint16
            arr = rng.integers(0, np.iinfo(dtype).max, size=shape).astype(dtype)
        out = read_npy_array(write_npy_array(arr))
        assert out.dtype == arr.dtype
        np.testing.assert_array_equal(out, arr)

    def test_volume_round_trip_preserves_densities(self):
        rng = np.random.default_rng(0)
        data = rng.random((4, 5, 6)).astype(np.float32)
        data.flat[0] = 0.0
        data.flat[-1] = 1.0  # full-range so minmax renormalization is identity
        vol = parse_npy(write_npy_array(data))
        again = parse_npy(write_npy(vol))
        np.testing.assert_array_equal(again.data, vol.data)

    def test_v2_header_supported(self):
        header = "{'descr': '|u1', 'fortran_order': False, 'shape': (2, 2, 2), }"
        pad = (64 - (6 + 2 + 4 + len(header) + 1) % 64) % 64
        full = header + " " * pad + "\n"
        blob = (
            b"\x93NUMPY" + bytes([2, 0]) + struct.pack("<I", len(full))
            + full.encode() + bytes(range(8))
        )
        vol = parse_npy(blob)
        assert vol.dims == (2, 2, 2)


def png_bytes(arr: np.ndarray, mode: str = "L") -> bytes:
    out = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(out, format="PNG")
    return out.getvalue()


def build_zip(entries: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        for name, blob in entries.items():
            zf.writestr(name, blob)
    return buf.getvalue()


class TestZipStack:
    def test_constant_slices(self):
        slice_png = png_bytes(np.full((8, 8), 255, dtype=np.uint8))
        blob = build_zip({f"s{k}.png": slice_png for k in range(4)})
        vol = load_zip_stack(blob)
        assert vol.dims == (8, 8, 4)
        assert float(vol.data.min()) == 1.0

    def test_lexicographic_slice_order(self):
        a = png_bytes(np.full((2, 2), 10, dtype=np.uint8))
        b = png_bytes(np.full((2, 2), 200, dtype=np.uint8))
        blob = build_zip({"s10.png": a, "s2.png": b})  # s10 sorts first
        vol = load_zip_stack(blob)
        assert vol.data[0, 0, 0] == pytest.approx(10 / 255)
        assert vol.data[1, 0, 0] == pytest.approx(200 / 255)

    def test_mismatched_shapes_name_both_files(self):
        a = png_bytes(np.zeros((4, 4), dtype=np.uint8))
        b = png_bytes(np.zeros((4, 5), dtype=np.uint8))
        with pytest.raises(ShapeError, match="b.png.*a.png"):
            load_zip_stack(build_zip({"a.png": a, "b.png": b}))

    def test_empty_archive(self):
        with pytest.raises(EmptyArchiveError):
            load_zip_stack(build_zip({"readme.txt": b"hello"}))

    def test_non_image_entries_ignored(self):
        slice_png = png_bytes(np.zeros((4, 4), dtype=np.uint8))
        vol = load_zip_stack(build_zip({"a.png": slice_png, "notes.txt": b"x"}))
        assert vol.dims == (4, 4, 1)

    def test_color_png_warns_and_converts(self):
        rgb = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb[..., 0] = 255
        blob = build_zip({"c.png": png_bytes(rgb, mode="RGB")})
        with pytest.warns(LuminanceConversionWarning):
            vol = load_zip_stack(blob)
        assert vol.dims == (4, 4, 1)

    def test_sphere_phantom_round_trip_within_quantization(self):
        vol = generate_sphere_phantom(24, 0.7)
        again = load_zip_stack(write_zip_stack(vol, bit_depth=8))
        assert np.abs(again.data - vol.data).max() <= 1 / 255

    def test_16bit_round_trip(self):
        vol = generate_sphere_phantom(12, 0.6)
        again = load_zip_stack(write_zip_stack(vol, bit_depth=16))
        assert np.abs(again.data - vol.data).max() <= 1 / 65535


class TestRaw:
    def test_u8_cube(self):
        desc = RawDescriptor(dims=(2, 2, 2), dtype="u8")
        vol = load_raw(bytes(range(8)), desc)
        assert vol.dims == (2, 2, 2)
        assert vol.source_range == (0.0, 7.0)

    def test_size_mismatch(self):
        desc = RawDescriptor(dims=(2, 2, 2), dtype="u8")
        with pytest.raises(SizeError, match="expected 8.*got 7"):
            load_raw(bytes(7), desc)

    def test_endianness_swap_hand_computed(self):
        # 0x0102 little-endian = bytes 02 01; big-endian reads those as 0x0201
        payload = struct.pack("<4H", 0x0102, 0x0304, 0x0506, 0x0708)
        little = load_raw(payload, RawDescriptor((2, 2, 1), "u16", "little"))
        big = load_raw(payload, RawDescriptor((2, 2, 1), "u16", "big"))
        assert little.source_range == (0x0102, 0x0708)
        assert big.source_range == (0x0201, 0x0807)

    def test_header_skip(self):
        desc = RawDescriptor(dims=(2, 1, 1), dtype="u8", header_skip=3)
        vol = load_raw(b"xyz" + bytes([0, 255]), desc)
        assert vol.data.reshape(-1).tolist() == [0.0, 1.0]

    def test_sidecar_json_round_trip(self):
        desc = RawDescriptor(dims=(3, 4, 5), dtype="f32", endianness="big", header_skip=16)
        assert RawDescriptor.from_json(desc.to_json()) == desc

    def test_bad_dtype_rejected(self):
        with pytest.raises(ParseError):
            RawDescriptor(dims=(1, 1, 1), dtype="i64")


TETRA_OBJ = """
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 1 3 2
f 1 2 4
f 1 4 3
f 2 3 4
"""


def tetra_stl_binary() -> bytes:
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)
    faces = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]
    out = bytearray(bytes(80))
    out += struct.pack("<I", len(faces))
    for a, b, c in faces:
        out += struct.pack("<12fH", 0, 0, 0, *verts[a], *verts[b], *verts[c], 0)
    return bytes(out)


class TestMeshIO:
    def test_unit_tetrahedron_obj(self):
        mesh = load_obj(TETRA_OBJ)
        assert mesh.vertex_count == 4
        assert mesh.triangle_count == 4

    def test_quad_face_fan_triangulation(self):
        obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
        mesh = load_obj(obj)
        assert mesh.triangle_count == 2

    def test_negative_indices(self):
        obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n"
        mesh = load_obj(obj)
        assert mesh.triangle_count == 1

    def test_face_index_out_of_range_reports_line(self):
        obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"
        with pytest.raises(IndexError, match="line 4"):
            load_obj(obj)

    def test_stl_binary_matches_obj_geometry(self):
        obj_mesh = load_obj(TETRA_OBJ)
        stl_mesh = load_stl(tetra_stl_binary())
        assert stl_mesh.vertex_count == 4
        assert stl_mesh.triangle_count == 4
        obj_set = {
            tuple(sorted(map(tuple, np.round(obj_mesh.vertices[t], 6))))
            for t in obj_mesh.triangles
        }
        stl_set = {
            tuple(sorted(map(tuple, np.round(stl_mesh.vertices[t], 6))))
            for t in stl_mesh.triangles
        }
        assert obj_set == stl_set

    def test_stl_binary_count_mismatch(self):
        blob = tetra_stl_binary()[:-10]
        with pytest.raises(SizeError):
            load_stl(blob)

    def test_empty_stl_rejected(self):
        blob = bytes(80) + struct.pack("<I", 0)
        with pytest.raises(ParseError, match="no triangles"):
            load_stl(blob)

    def test_stl_ascii(self):
        text = """solid t
facet normal 0 0 1
 outer loop
  vertex 0 0 0
  vertex 1 0 0
  vertex 0 1 0
 endloop
endfacet
endsolid t
"""
        mesh = load_stl(text.encode())
        assert mesh.triangle_count == 1
        assert mesh.vertex_count == 3

    def test_save_load_obj_round_trip(self):
        mesh = load_obj(TETRA_OBJ)
        again = load_obj(save_obj(mesh))
        np.testing.assert_allclose(again.vertices, mesh.vertices, atol=1e-9)
        np.testing.assert_array_equal(again.triangles, mesh.triangles)

    def test_save_load_stl_round_trip(self):
        mesh = load_obj(TETRA_OBJ)
        again = load_stl(save_stl(mesh))
        assert again.triangle_count == mesh.triangle_count

    def test_computed_normals_are_unit(self):
        mesh = load_obj(TETRA_OBJ)
        lengths = np.linalg.norm(mesh.normals, axis=1)
        np.testing.assert_allclose(lengths, 1.0, atol=1e-4)


class TestLutCsv:
    def test_two_anchor_identity(self):
        lut = load_lut_csv("0,0,0,0,0\n255,1,1,1,1\n")
        rgba = lut_apply(lut, 0.5)
        for c in rgba:
            assert c == pytest.approx(0.5, abs=1 / 255)

    def test_single_anchor_rejected(self):
        with pytest.raises(ParseError, match="at least 2"):
            load_lut_csv("0,0,0,0,0\n")

    def test_three_anchor_interpolation_midpoint(self):
        # oracle: entry 64 sits halfway between anchors at 0 and 128
        text = "0,0,0,0,0\n128,1,0.5,0,1\n255,1,1,1,1\n"
        lut = load_lut_csv(text)
        expected = np.array([0.5, 0.25, 0.0, 0.5])
        np.testing.assert_allclose(lut.entries[64], expected, atol=1e-6)

    def test_descending_indices_report_row(self):
        with pytest.raises(ParseError, match="row 3"):
            load_lut_csv("0,0,0,0,0\n128,1,1,1,1\n64,0,0,0,0\n")

    def test_channel_out_of_range_reports_row(self):
        with pytest.raises(ParseError, match="row 2"):
            load_lut_csv("0,0,0,0,0\n255,1.5,0,0,1\n")

    def test_flat_extension_beyond_anchors(self):
        lut = load_lut_csv("100,0.2,0.4,0.6,0.8\n200,1,1,1,1\n")
        np.testing.assert_allclose(lut.entries[0], [0.2, 0.4, 0.6, 0.8], atol=1e-6)
        np.testing.assert_allclose(lut.entries[255], [1, 1, 1, 1], atol=1e-6)
