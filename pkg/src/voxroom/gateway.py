"""WebSocket gateway: lets UI clients steer a live session node and streams
rendered frames back.

Text messages (JSON) from clients carry ops (load_specimen, set_viz,
set_transform, grab, release, set_camera, list); the server answers with
scene_state / presence / error events plus binary frames laid out as
big-endian u32 frame_id, u16 width, u16 height, then PNG bytes.

Each client gets at most one in-flight render; a camera update arriving
mid-render marks the client dirty and the newest state renders next
(latest-request-wins). While a drag is active the render quality drops one
notch, restoring 300 ms after the last drag input.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import radians
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .errors import UnsupportedError, VoxroomError
from .ingest import (
    RawDescriptor,
    load_lut_csv,
    load_obj,
    load_raw,
    load_stl,
    load_zip_stack,
    parse_npy,
)
from .mesh import Mesh
from .render import (
    MATERIAL_PRESETS,
    Camera,
    ExclusionPlane,
    Frame,
    VizParams,
    render_mesh_frame,
    render_volume_frame,
)
from .sync import PoseRecord, SpecimenRecord, TransformRecord, VizRecord
from .volume import BUILTIN_LUT_NAMES, MipPyramid, Volume, build_mip_pyramid, builtin_lut

QUALITY_LADDER = ("low", "medium", "high")
DRAG_QUALITY_RESTORE_MS = 300.0


# --- specimen loading -------------------------------------------------------

@dataclass(frozen=True)
class Renderable:
    kind: str  # volume | mesh
    volume: Volume | None = None
    pyramid: MipPyramid | None = None
    mesh: Mesh | None = None


def sniff_kind(path: Path, data: bytes) -> str:
    """Classify by extension, cross-checked against magic bytes."""
    ext = path.suffix.lower()
    if ext == ".npy":
        if not data.startswith(b"\x93NUMPY"):
            raise UnsupportedError(f"{path.name}: .npy extension but wrong magic")
        return "npy"
    if ext == ".zip":
        if not data.startswith(b"PK"):
            raise UnsupportedError(f"{path.name}: .zip extension but wrong magic")
        return "zip"
    if ext == ".bin":
        return "bin"
    if ext == ".obj":
        return "obj"
    if ext == ".stl":
        return "stl"
    raise UnsupportedError(f"unknown specimen format: {path.name}")


def load_specimen_file(path: str | Path, descriptor: RawDescriptor | None = None):
    """Load a file -> (kind, sha256 hex, Renderable)."""
    path = Path(path)
    data = path.read_bytes()
    fmt = sniff_kind(path, data)
    digest = hashlib.sha256(data).hexdigest()
    if fmt in ("npy", "zip", "bin"):
        if fmt == "npy":
            volume = parse_npy(data)
        elif fmt == "zip":
            volume = load_zip_stack(data)
        else:
            if descriptor is None:
                sidecar = path.with_suffix(path.suffix + ".json")
                if not sidecar.exists():
                    raise UnsupportedError(
                        f"{path.name}: .bin needs a descriptor (flags or {sidecar.name})"
                    )
                descriptor = RawDescriptor.from_json(sidecar.read_text())
            volume = load_raw(data, descriptor)
        renderable = Renderable(kind="volume", volume=volume, pyramid=build_mip_pyramid(volume))
        return "volume", digest, renderable
    mesh = load_obj(data.decode("utf-8", errors="replace")) if fmt == "obj" else load_stl(data)
    return "mesh", digest, Renderable(kind="mesh", mesh=mesh)


class SpecimenStore:
    """Cache of loaded renderables keyed by content hash; remote records are
    resolved lazily from their origin path (desk-scale blob transfer is a
    file copy, voxels never ride the sync channels)."""

    def __init__(self) -> None:
        self._by_hash: dict[str, Renderable] = {}
        self._failed: set[str] = set()
        self._lock = threading.Lock()

    def put(self, digest: str, renderable: Renderable) -> None:
        with self._lock:
            self._by_hash[digest] = renderable

    def resolve(self, record: SpecimenRecord) -> Renderable | None:
        with self._lock:
            if record.source_hash in self._by_hash:
                return self._by_hash[record.source_hash]
            if record.source_hash in self._failed:
                return None
        try:
            _, digest, renderable = load_specimen_file(record.source_origin)
        except (OSError, VoxroomError):
            with self._lock:
                self._failed.add(record.source_hash)
            return None
        with self._lock:
            self._by_hash[digest] = renderable
        return self._by_hash.get(record.source_hash)


# --- LUT and camera helpers --------------------------------------------------

def resolve_lut(name: str):
    if name in BUILTIN_LUT_NAMES:
        return builtin_lut(name)
    path = Path(name)
    if path.suffix.lower() == ".csv" and path.exists():
        return load_lut_csv(path.read_text(), name=path.stem)
    return builtin_lut("grayscale")


def quat_to_matrix(q: tuple[float, float, float, float]) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def camera_from_params(params: dict) -> Camera:
    return Camera.look_at(
        position=tuple(params.get("pos", (0.0, 0.0, 120.0))),
        target=tuple(params.get("target", (0.0, 0.0, 0.0))),
        up=tuple(params.get("up", (0.0, 1.0, 0.0))),
        vertical_fov=radians(float(params.get("fov_deg", 45.0))),
        width=int(params.get("width", 256)),
        height=int(params.get("height", 256)),
    )


def _camera_in_specimen_space(camera: Camera, transform: TransformRecord, divide_scale: bool) -> Camera:
    rot_inv = quat_to_matrix(transform.orientation).T
    pos = rot_inv @ (np.asarray(camera.position) - np.asarray(transform.position))
    if divide_scale:
        pos = pos / transform.scale
    fwd = rot_inv @ np.asarray(camera.forward)
    up = rot_inv @ np.asarray(camera.up)
    return Camera(
        position=tuple(pos), forward=tuple(fwd), up=tuple(up),
        vertical_fov=camera.vertical_fov, width=camera.width, height=camera.height,
    )


def viz_params_from_record(viz: VizRecord, scale: float, quality: str | None = None) -> VizParams:
    planes = tuple(
        ExclusionPlane(normal=(nx, ny, nz), offset=off, enabled=en)
        for nx, ny, nz, off, en in viz.planes
        if (nx, ny, nz) != (0.0, 0.0, 0.0)
    )
    return VizParams(
        lut=resolve_lut(viz.lut_name),
        opacity_scale=viz.opacity,
        quality=quality or viz.quality,
        planes=planes,
        scale=scale,
    )


def render_scene(
    records: list[SpecimenRecord],
    store: SpecimenStore,
    camera: Camera,
    quality_override: str | None = None,
    workers: int = 1,
) -> Frame:
    """Composite per-specimen renders far-to-near (premultiplied over)."""
    out = np.zeros((camera.height, camera.width, 4), dtype=np.float64)
    cam_pos = np.asarray(camera.position)

    def distance(rec: SpecimenRecord) -> float:
        return -float(np.linalg.norm(np.asarray(rec.transform.position) - cam_pos))

    for record in sorted(records, key=distance):
        renderable = store.resolve(record)
        if renderable is None:
            continue
        if renderable.kind == "volume":
            local_cam = _camera_in_specimen_space(camera, record.transform, divide_scale=False)
            viz = viz_params_from_record(record.viz, record.transform.scale, quality_override)
            frame = render_volume_frame(
                renderable.volume, local_cam, viz, pyramid=renderable.pyramid, workers=workers
            )
        else:
            local_cam = _camera_in_specimen_space(camera, record.transform, divide_scale=True)
            material = MATERIAL_PRESETS.get(record.viz.material, MATERIAL_PRESETS["default_gray"])
            frame = render_mesh_frame(renderable.mesh, local_cam, material)
        top = frame.pixels.astype(np.float64) / 255.0
        alpha = top[..., 3:4]
        out = np.concatenate([top[..., :3], alpha], axis=2) + (1.0 - alpha) * out
    return Frame.from_float_rgba(out)


# --- gateway app ---------------------------------------------------------------

def lower_quality(quality: str) -> str:
    idx = QUALITY_LADDER.index(quality)
    return QUALITY_LADDER[max(0, idx - 1)]


class _Client:
    def __init__(self, client_id: str, ws: WebSocket):
        self.id = client_id
        self.ws = ws
        self.name = client_id
        self.camera_params: dict | None = None
        self.frame_id = 0
        self.outbox: asyncio.Queue = asyncio.Queue()
        self.render_wanted = asyncio.Event()
        self.last_drag_ms = -1e12

    def queue_json(self, obj: dict) -> None:
        self.outbox.put_nowait(("json", obj))

    def queue_frame(self, frame_id: int, frame: Frame) -> None:
        header = struct.pack(">IHH", frame_id, frame.width, frame.height)
        self.outbox.put_nowait(("bytes", header + frame.to_png()))


class GatewayHub:
    """Shared state across client connections for one session node."""

    def __init__(self, session, store: SpecimenStore, render_workers: int = 2):
        self.session = session
        self.store = store
        self.pool = ThreadPoolExecutor(max_workers=max(1, render_workers))
        self.clients: dict[str, _Client] = {}
        self._next_client = 0
        self._lock = threading.Lock()
        session.listeners.append(self._on_session_event)

    def new_client(self, ws: WebSocket) -> _Client:
        with self._lock:
            self._next_client += 1
            client = _Client(f"ui{self._next_client}", ws)
            self.clients[client.id] = client
        return client

    def drop_client(self, client: _Client) -> None:
        with self._lock:
            self.clients.pop(client.id, None)
        self.broadcast_presence()

    def _on_session_event(self, kind: str) -> None:
        if kind == "scene":
            self.broadcast_scene()
            for client in list(self.clients.values()):
                client.render_wanted.set()
        else:
            self.broadcast_presence()

    # -- state payloads -----------------------------------------------------

    def scene_state(self) -> dict:
        specimens, _peers = self.session.snapshot()
        items = []
        for sid in sorted(specimens):
            rec = specimens[sid]
            items.append(
                {
                    "id": sid,
                    "kind": rec.kind,
                    "source": {"hash": rec.source_hash, "origin": rec.source_origin},
                    "transform": {
                        "position": list(rec.transform.position),
                        "orientation": list(rec.transform.orientation),
                        "scale": rec.transform.scale,
                    },
                    "viz": {
                        "lut": rec.viz.lut_name,
                        "opacity": rec.viz.opacity,
                        "quality": rec.viz.quality,
                        "planes": [list(p) for p in rec.viz.planes],
                        "material": rec.viz.material,
                    },
                    "owner": rec.owner,
                    "version": [rec.lamport, rec.writer],
                }
            )
        return {"ev": "scene_state", "room": self.session.room, "self": self.session.peer_id,
                "specimens": items}

    def presence(self) -> dict:
        _specimens, peers = self.session.snapshot()
        peer_items = []
        for pid in sorted(peers):
            info, pose, connected = peers[pid]
            entry = {
                "id": pid,
                "name": info.display_name,
                "connected": connected,
                "self": pid == self.session.peer_id,
            }
            if pose is not None:
                entry["pose"] = {
                    "position": list(pose.position),
                    "orientation": list(pose.orientation),
                }
            peer_items.append(entry)
        client_items = [
            {"id": c.id, "name": c.name} for c in sorted(self.clients.values(), key=lambda c: c.id)
        ]
        return {"ev": "presence", "peers": peer_items, "clients": client_items}

    def broadcast_scene(self) -> None:
        payload = self.scene_state()
        for client in list(self.clients.values()):
            client.queue_json(payload)

    def broadcast_presence(self) -> None:
        payload = self.presence()
        for client in list(self.clients.values()):
            client.queue_json(payload)

    # -- rendering ------------------------------------------------------------

    def render_for(self, client: _Client) -> tuple[int, Frame] | None:
        if client.camera_params is None:
            return None
        specimens, _ = self.session.snapshot()
        records = list(specimens.values())
        camera = camera_from_params(client.camera_params)
        now = time.monotonic() * 1000.0
        override = None
        if now - client.last_drag_ms < DRAG_QUALITY_RESTORE_MS:
            qualities = {rec.viz.quality for rec in records} or {"medium"}
            override = lower_quality(min(qualities, key=QUALITY_LADDER.index))
        client.frame_id += 1
        frame = render_scene(records, self.store, camera, quality_override=override)
        return client.frame_id, frame


def create_gateway_app(session, store: SpecimenStore | None = None,
                       render_workers: int = 2, static_dir: str | Path | None = None) -> FastAPI:
    store = store if store is not None else SpecimenStore()
    hub = GatewayHub(session, store, render_workers=render_workers)
    app = FastAPI(title="voxroom gateway")
    app.state.hub = hub

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        client = hub.new_client(ws)
        client.queue_json(hub.scene_state())
        client.queue_json(hub.presence())
        hub.broadcast_presence()
        loop = asyncio.get_running_loop()

        async def sender() -> None:
            while True:
                kind, payload = await client.outbox.get()
                if kind == "json":
                    await ws.send_json(payload)
                else:
                    await ws.send_bytes(payload)

        async def renderer() -> None:
            while True:
                await client.render_wanted.wait()
                client.render_wanted.clear()
                result = await loop.run_in_executor(hub.pool, hub.render_for, client)
                if result is not None:
                    frame_id, frame = result
                    client.queue_frame(frame_id, frame)
                    if now_ms() - client.last_drag_ms < DRAG_QUALITY_RESTORE_MS:
                        loop.call_later(
                            DRAG_QUALITY_RESTORE_MS / 1000.0 + 0.02,
                            client.render_wanted.set,
                        )

        def now_ms() -> float:
            return time.monotonic() * 1000.0

        send_task = asyncio.ensure_future(sender())
        render_task = asyncio.ensure_future(renderer())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict) or "op" not in msg:
                        raise ValueError("message must be an object with an 'op'")
                except ValueError as exc:
                    client.queue_json({"ev": "error", "message": f"bad message: {exc}"})
                    continue
                try:
                    _handle_op(hub, client, msg)
                except KeyError as exc:
                    client.queue_json({"ev": "error", "message": f"unknown specimen {exc}"})
                except (VoxroomError, OSError, ValueError) as exc:
                    client.queue_json({"ev": "error", "message": str(exc)})
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            render_task.cancel()
            hub.drop_client(client)

    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def _handle_op(hub: GatewayHub, client: _Client, msg: dict) -> None:
    op = msg["op"]
    session = hub.session
    now = time.monotonic() * 1000.0
    if op == "list":
        client.queue_json(hub.scene_state())
        client.queue_json(hub.presence())
    elif op == "load_specimen":
        path = Path(msg["path"])
        kind, digest, renderable = load_specimen_file(path)
        hub.store.put(digest, renderable)
        sid = msg.get("specimen_id") or path.stem
        session.submit(
            lambda node, t: node.local_load_specimen(sid, kind, digest, str(path.resolve()), t)
        )
    elif op == "set_viz":
        sid = msg["specimen_id"]
        specimens, _ = session.snapshot()
        current = specimens[sid]  # KeyError -> error event
        viz = current.viz
        planes = msg.get("planes")
        new_viz = VizRecord(
            lut_name=msg.get("lut", viz.lut_name),
            opacity=float(msg.get("opacity", viz.opacity)),
            quality=msg.get("quality", viz.quality),
            planes=tuple(tuple(p) for p in planes) if planes is not None else viz.planes,
            material=msg.get("material", viz.material),
        )
        session.submit(lambda node, t: node.local_set_viz(sid, new_viz, t))
    elif op == "set_transform":
        sid = msg["specimen_id"]
        specimens, _ = session.snapshot()
        current = specimens[sid]
        t_old = current.transform
        transform = TransformRecord(
            position=tuple(msg.get("position", t_old.position)),
            orientation=tuple(msg.get("orientation", t_old.orientation)),
            scale=float(msg.get("scale", t_old.scale)),
        )
        client.last_drag_ms = now
        session.submit(lambda node, t: node.local_set_transform(sid, transform, t))
    elif op == "grab":
        sid = msg["specimen_id"]
        session.submit(lambda node, t: node.local_grab(sid, t))
    elif op == "release":
        sid = msg["specimen_id"]
        session.submit(lambda node, t: node.local_release(sid, t))
    elif op == "set_camera":
        if "name" in msg:
            client.name = str(msg["name"])
            hub.broadcast_presence()
        params = {k: v for k, v in msg.items() if k not in ("op", "name", "drag")}
        if params:
            client.camera_params = {**(client.camera_params or {}), **params}
        if msg.get("drag"):
            client.last_drag_ms = now
        pose = PoseRecord(position=tuple((client.camera_params or {}).get("pos", (0, 0, 0))))
        session.submit(lambda node, t: node.local_set_pose(pose, t))
        client.render_wanted.set()
    else:
        client.queue_json({"ev": "error", "message": f"unknown op {op!r}"})
