import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from voxroom.ingest import load_stl, write_npy_array
from voxroom.isosurface import mesh_stats
from voxroom.phantoms import generate_sphere_phantom
from voxroom.render import Frame

GOLDEN = Path(__file__).parent / "golden"


def run_cli(*args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "voxroom.cli", *map(str, args)],
        capture_output=True, text=True, timeout=120, **kw,
    )


@pytest.fixture(scope="module")
def sphere_npy():
    # same phantom the golden was rendered from
    return GOLDEN / "sphere48.npy"


class TestRenderCommand:
    def test_golden_render_bit_exact(self, sphere_npy, tmp_path):
        out = tmp_path / "render.png"
        r = run_cli(
            "render", "--volume", sphere_npy, "--out", out,
            "--size", "96x96", "--opacity", "0.8", "--lut", "fire",
        )
        assert r.returncode == 0, r.stderr
        assert out.read_bytes() == (GOLDEN / "sphere48_render.png").read_bytes()

    def test_deterministic_across_runs_and_workers(self, sphere_npy, tmp_path):
        blobs = []
        for i, workers in enumerate((1, 1, 4)):
            out = tmp_path / f"r{i}.png"
            r = run_cli(
                "render", "--volume", sphere_npy, "--out", out,
                "--size", "64x64", "--workers", workers,
            )
            assert r.returncode == 0, r.stderr
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]

    def test_opacity_zero_transparent(self, sphere_npy, tmp_path):
        out = tmp_path / "clear.png"
        r = run_cli("render", "--volume", sphere_npy, "--out", out, "--opacity", "0",
                    "--size", "32x32")
        assert r.returncode == 0, r.stderr
        frame = Frame.from_png(out.read_bytes())
        assert frame.pixels[..., 3].max() == 0

    def test_exclusion_plane_halves_mass(self, sphere_npy, tmp_path):
        full = tmp_path / "full.png"
        cut = tmp_path / "cut.png"
        common = ["render", "--volume", sphere_npy, "--size", "64x64"]
        assert run_cli(*common, "--out", full).returncode == 0
        assert run_cli(*common, "--plane", "1,0,0,0", "--out", cut).returncode == 0
        mass_full = Frame.from_png(full.read_bytes()).pixels[..., 3].astype(float).sum()
        mass_cut = Frame.from_png(cut.read_bytes()).pixels[..., 3].astype(float).sum()
        assert abs(mass_cut / mass_full - 0.5) < 0.05

    def test_unknown_format_exits_2(self, tmp_path):
        bad = tmp_path / "volume.xyz"
        bad.write_bytes(b"???")
        r = run_cli("render", "--volume", bad, "--out", tmp_path / "o.png")
        assert r.returncode == 2
        assert "unknown" in r.stderr.lower() or "format" in r.stderr.lower()

    def test_extension_magic_mismatch_exits_2(self, tmp_path):
        fake = tmp_path / "fake.npy"
        fake.write_bytes(b"PK\x03\x04" + bytes(32))
        r = run_cli("render", "--volume", fake, "--out", tmp_path / "o.png")
        assert r.returncode == 2

    def test_volume_plus_material_conflict(self, sphere_npy, tmp_path):
        r = run_cli(
            "render", "--volume", sphere_npy, "--material", "glass",
            "--out", tmp_path / "o.png",
        )
        assert r.returncode == 2

    def test_volume_and_mesh_conflict(self, sphere_npy, tmp_path):
        r = run_cli(
            "render", "--volume", sphere_npy, "--mesh", sphere_npy,
            "--out", tmp_path / "o.png",
        )
        assert r.returncode == 2

    def test_mesh_render(self, tmp_path):
        mc = run_cli("mc", "--volume", GOLDEN / "sphere48.npy", "--out", tmp_path / "m.stl")
        assert mc.returncode == 0, mc.stderr
        out = tmp_path / "mesh.png"
        r = run_cli("render", "--mesh", tmp_path / "m.stl", "--material", "pearl",
                    "--out", out, "--size", "48x48",
                    "--cam-pos", "23.5,23.5,120", "--cam-target", "23.5,23.5,23.5")
        assert r.returncode == 0, r.stderr
        frame = Frame.from_png(out.read_bytes())
        assert frame.pixels[..., 3].max() == 255

    def test_raw_bin_with_flags(self, tmp_path):
        vol = generate_sphere_phantom(16, 0.6)
        raw = np.round(vol.data * 255).astype(np.uint8).tobytes()
        bin_path = tmp_path / "vol.bin"
        bin_path.write_bytes(raw)
        out = tmp_path / "raw.png"
        r = run_cli(
            "render", "--volume", bin_path, "--raw-dims", "16,16,16",
            "--raw-dtype", "u8", "--out", out, "--size", "24x24",
        )
        assert r.returncode == 0, r.stderr

    def test_raw_bin_without_descriptor_exits_2(self, tmp_path):
        bin_path = tmp_path / "vol.bin"
        bin_path.write_bytes(bytes(64))
        r = run_cli("render", "--volume", bin_path, "--out", tmp_path / "o.png")
        assert r.returncode == 2
        assert "descriptor" in r.stderr


class TestMcCommand:
    def test_sphere_to_watertight_stl(self, sphere_npy, tmp_path):
        out = tmp_path / "sphere.stl"
        r = run_cli("mc", "--volume", sphere_npy, "--iso", "0.5", "--out", out)
        assert r.returncode == 0, r.stderr
        mesh = load_stl(out.read_bytes())
        stats = mesh_stats(mesh)
        assert stats["triangle_count"] > 0
        assert stats["boundary_edge_count"] == 0
        assert stats["euler_characteristic"] == 2

    def test_obj_output(self, sphere_npy, tmp_path):
        out = tmp_path / "sphere.obj"
        r = run_cli("mc", "--volume", sphere_npy, "--out", out)
        assert r.returncode == 0
        assert out.read_text().startswith("v ")

    def test_empty_volume_warns_exit_zero(self, tmp_path):
        empty = tmp_path / "empty.npy"
        empty.write_bytes(write_npy_array(np.zeros((8, 8, 8), dtype=np.uint8)))
        r = run_cli("mc", "--volume", empty, "--out", tmp_path / "e.stl")
        assert r.returncode == 0
        assert "empty mesh" in r.stderr

    def test_iso_out_of_range_exits_2(self, sphere_npy, tmp_path):
        r = run_cli("mc", "--volume", sphere_npy, "--iso", "1.5", "--out", tmp_path / "x.stl")
        assert r.returncode == 2


class TestSimulateCommand:
    SCENARIO = {
        "seed": 42,
        "loss_rate": 0.05,
        "latency_ms": [20, 80],
        "reorder": True,
        "duration_ms": 8000,
        "nodes": ["n0", "n1"],
        "script": [
            {"at": 0, "node": "n0", "op": "join"},
            {"at": 50, "node": "n1", "op": "join"},
            {"at": 2000, "node": "n0", "op": "load", "specimen": "s"},
            {"at": 2500, "node": "n1", "op": "transform", "specimen": "s", "pos": [1, 2, 3]},
        ],
    }

    def test_fixed_seed_reproducible_hash(self, tmp_path):
        scenario = tmp_path / "scenario.json"
        scenario.write_text(json.dumps(self.SCENARIO))
        r1 = run_cli("simulate", scenario)
        r2 = run_cli("simulate", scenario)
        assert r1.returncode == 0, r1.stderr
        hash1 = [l for l in r1.stdout.splitlines() if l.startswith("trace hash:")][0]
        hash2 = [l for l in r2.stdout.splitlines() if l.startswith("trace hash:")][0]
        assert hash1 == hash2

    def test_trace_export(self, tmp_path):
        scenario = tmp_path / "scenario.json"
        scenario.write_text(json.dumps(self.SCENARIO))
        trace = tmp_path / "trace.jsonl"
        r = run_cli("simulate", scenario, "--trace", trace)
        assert r.returncode == 0
        lines = trace.read_text().strip().splitlines()
        assert len(lines) > 10
        assert all(json.loads(line) for line in lines)

    def test_bad_scenario_exits_2(self, tmp_path):
        scenario = tmp_path / "bad.json"
        scenario.write_text(json.dumps({"nodes": ["a"], "script": [{"at": 0, "node": "zz", "op": "join"}]}))
        r = run_cli("simulate", scenario)
        assert r.returncode == 2


class TestSessionCommands:
    def test_join_unreachable_broker_exits_3(self):
        r = run_cli(
            "join", "--room", "r", "--broker", "127.0.0.1:9", "--join-timeout", "3",
        )
        assert r.returncode == 3
        assert "join" in r.stderr

    def test_usage_error_exits_2(self):
        r = run_cli("render")  # missing --out
        assert r.returncode == 2
