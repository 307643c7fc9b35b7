import json
import struct
import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message="Using `httpx` with `starlette")

from starlette.testclient import TestClient

from voxroom.gateway import (
    SpecimenStore,
    create_gateway_app,
    load_specimen_file,
    lower_quality,
    render_scene,
)
from voxroom.ingest import write_npy_array
from voxroom.phantoms import generate_sphere_phantom
from voxroom.render import Camera, Frame
from voxroom.runtime import LocalSession
from voxroom.sync import TransformRecord, make_specimen_record


@pytest.fixture(scope="module")
def sphere_npy(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("specimens")
    vol = generate_sphere_phantom(32, 0.6)
    path = tmp / "sphere.npy"
    path.write_bytes(write_npy_array((vol.data * 255).astype(np.uint8)))
    return path


@pytest.fixture()
def gateway():
    session = LocalSession()
    app = create_gateway_app(session, SpecimenStore(), render_workers=1)
    with TestClient(app) as client:
        yield client, session


def recv_until(ws, ev, tries=30):
    for _ in range(tries):
        msg = ws.receive_json()
        if msg.get("ev") == ev:
            return msg
    raise AssertionError(f"no {ev} event within {tries} messages")


def recv_frame(ws, min_frame_id=0, tries=40):
    for _ in range(tries):
        msg = ws.receive()
        if "bytes" in msg:
            fid, w, h = struct.unpack(">IHH", msg["bytes"][:8])
            if fid >= min_frame_id:
                return fid, w, h, msg["bytes"][8:]
    raise AssertionError("no frame received")


class TestGatewayProtocol:
    def test_connect_sends_immediate_scene_state(self, gateway):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            first = ws.receive_json()
            assert first["ev"] == "scene_state"
            assert first["specimens"] == []

    def test_load_specimen_appears_in_scene(self, gateway, sphere_npy):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"op": "load_specimen", "path": str(sphere_npy)}))
            for _ in range(10):
                ev = ws.receive_json()
                if ev.get("ev") == "scene_state" and ev["specimens"]:
                    break
            assert ev["specimens"][0]["id"] == "sphere"
            assert ev["specimens"][0]["kind"] == "volume"
            assert ev["specimens"][0]["source"]["hash"]

    def test_opacity_zero_gives_transparent_frame(self, gateway, sphere_npy):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"op": "load_specimen", "path": str(sphere_npy)}))
            ws.send_text(json.dumps(
                {"op": "set_camera", "pos": [0, 0, 80], "width": 24, "height": 24}
            ))
            fid, w, h, png = recv_frame(ws)
            assert (w, h) == (24, 24)
            opaque = Frame.from_png(png)
            assert opaque.pixels[..., 3].max() > 0
            ws.send_text(json.dumps({"op": "set_viz", "specimen_id": "sphere", "opacity": 0}))
            ws.send_text(json.dumps({"op": "set_camera", "pos": [0, 0, 80]}))
            fid2, _w, _h, png2 = recv_frame(ws, min_frame_id=fid + 1)
            clear = Frame.from_png(png2)
            assert clear.pixels[..., 3].max() == 0

    def test_frame_ids_monotonic(self, gateway, sphere_npy):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"op": "load_specimen", "path": str(sphere_npy)}))
            ids = []
            last = 0
            for k in range(3):
                ws.send_text(json.dumps(
                    {"op": "set_camera", "pos": [0, 0, 80 + k], "width": 16, "height": 16}
                ))
                fid, *_ = recv_frame(ws, min_frame_id=last + 1)
                ids.append(fid)
                last = fid
            assert ids == sorted(ids)
            assert len(set(ids)) == len(ids)

    def test_malformed_json_keeps_connection_open(self, gateway):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text("{broken")
            err = recv_until(ws, "error")
            assert "bad message" in err["message"]
            ws.send_text(json.dumps({"op": "list"}))
            assert recv_until(ws, "scene_state")

    def test_unknown_specimen_error_event(self, gateway):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"op": "set_viz", "specimen_id": "ghost", "opacity": 1}))
            err = recv_until(ws, "error")
            assert "ghost" in err["message"]

    def test_grab_release_owner_in_scene_state(self, gateway, sphere_npy):
        client, session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"op": "load_specimen", "path": str(sphere_npy)}))
            ws.send_text(json.dumps({"op": "grab", "specimen_id": "sphere"}))
            for _ in range(10):
                ev = ws.receive_json()
                if ev.get("ev") == "scene_state" and ev["specimens"] and ev["specimens"][0]["owner"]:
                    break
            assert ev["specimens"][0]["owner"] == session.peer_id
            ws.send_text(json.dumps({"op": "release", "specimen_id": "sphere"}))
            for _ in range(10):
                ev = ws.receive_json()
                if ev.get("ev") == "scene_state" and ev["specimens"] and not ev["specimens"][0]["owner"]:
                    break
            assert ev["specimens"][0]["owner"] == ""

    def test_set_transform_round_trips(self, gateway, sphere_npy):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"op": "load_specimen", "path": str(sphere_npy)}))
            ws.send_text(json.dumps(
                {"op": "set_transform", "specimen_id": "sphere", "position": [1, 2, 3]}
            ))
            for _ in range(10):
                ev = ws.receive_json()
                if (
                    ev.get("ev") == "scene_state"
                    and ev["specimens"]
                    and ev["specimens"][0]["transform"]["position"] == [1.0, 2.0, 3.0]
                ):
                    break
            assert ev["specimens"][0]["transform"]["position"] == [1.0, 2.0, 3.0]

    def test_two_clients_see_each_other_in_roster(self, gateway):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws1:
            ws1.receive_json()
            with client.websocket_connect("/ws") as ws2:
                pres = recv_until(ws2, "presence")
                while len(pres["clients"]) < 2:
                    pres = recv_until(ws2, "presence")
                assert len({c["id"] for c in pres["clients"]}) == 2
                pres1 = recv_until(ws1, "presence")
                while len(pres1["clients"]) < 2:
                    pres1 = recv_until(ws1, "presence")
                assert len(pres1["clients"]) == 2

    def test_unknown_op_reports_error(self, gateway):
        client, _session = gateway
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text(json.dumps({"op": "selfdestruct"}))
            err = recv_until(ws, "error")
            assert "selfdestruct" in err["message"]


class TestQualityGovernor:
    def test_lower_quality_steps_down(self):
        assert lower_quality("high") == "medium"
        assert lower_quality("medium") == "low"
        assert lower_quality("low") == "low"

    def test_drag_drops_quality_one_notch(self, sphere_npy, monkeypatch):
        import time

        import voxroom.gateway as gw
        from voxroom.gateway import GatewayHub, _Client

        session = LocalSession()
        hub = GatewayHub(session, SpecimenStore(), render_workers=1)
        _kind, digest, renderable = load_specimen_file(sphere_npy)
        hub.store.put(digest, renderable)
        session.submit(
            lambda node, t: node.local_load_specimen(
                "sphere", "volume", digest, str(sphere_npy), t
            )
        )

        seen = []

        def spy(records, store, camera, quality_override=None, workers=1):
            seen.append(quality_override)
            return Frame(width=1, height=1, pixels=np.zeros((1, 1, 4), dtype=np.uint8))

        monkeypatch.setattr(gw, "render_scene", spy)
        client = _Client("ui-test", ws=None)
        client.camera_params = {"pos": [0, 0, 80], "width": 8, "height": 8}
        hub.render_for(client)  # idle: native quality
        client.last_drag_ms = time.monotonic() * 1000.0
        hub.render_for(client)  # dragging: one notch down from medium
        client.last_drag_ms = time.monotonic() * 1000.0 - 1000.0
        hub.render_for(client)  # 300 ms elapsed: restored
        assert seen == [None, "low", None]


class TestRenderScene:
    def test_transformed_specimen_moves_in_frame(self, sphere_npy):
        store = SpecimenStore()
        _kind, digest, renderable = load_specimen_file(sphere_npy)
        store.put(digest, renderable)
        camera = Camera.look_at((0, 0, 90), (0, 0, 0), width=48, height=48)

        def rec(pos):
            return make_specimen_record(
                "s", "volume", digest, str(sphere_npy), version=(1, "a" * 32),
                transform=TransformRecord(position=pos),
            )

        centered = render_scene([rec((0, 0, 0))], store, camera)
        shifted = render_scene([rec((20, 0, 0))], store, camera)
        cx_centered = np.average(
            np.arange(48), weights=centered.pixels[..., 3].sum(axis=0) + 1e-9
        )
        cx_shifted = np.average(
            np.arange(48), weights=shifted.pixels[..., 3].sum(axis=0) + 1e-9
        )
        assert cx_shifted > cx_centered + 3

    def test_unresolvable_specimen_skipped(self):
        store = SpecimenStore()
        rec = make_specimen_record(
            "missing", "volume", "nohash", "/does/not/exist.npy", version=(1, "a" * 32)
        )
        camera = Camera.look_at((0, 0, 50), (0, 0, 0), width=8, height=8)
        frame = render_scene([rec], store, camera)
        assert frame.pixels.max() == 0
