"""Command line entry points.

Exit codes: 0 success, 2 usage or format problems, 3 network failures.
Renders are bit-deterministic for fixed flags, including across --workers.
"""

from __future__ import annotations

import argparse
import asyncio
import math
import sys
from pathlib import Path

from .errors import JoinError, VoxroomError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NETWORK = 3


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z got {text!r}")
    return tuple(float(p) for p in parts)


def _parse_plane(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected nx,ny,nz,offset got {text!r}")
    return tuple(float(p) for p in parts)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected WxH got {text!r}") from exc


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port got {text!r}")
    return host, int(port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxroom")
    sub = parser.add_subparsers(dest="command", required=True)

    render = sub.add_parser("render", help="render a volume or mesh to PNG")
    render.add_argument("--volume", type=Path)
    render.add_argument("--mesh", type=Path)
    render.add_argument("--lut", default="grayscale", help="builtin name or CSV path")
    render.add_argument("--opacity", type=float, default=1.0)
    render.add_argument("--quality", choices=["low", "med", "medium", "high"], default="medium")
    render.add_argument("--plane", type=_parse_plane, action="append", default=[],
                        help="nx,ny,nz,offset (repeatable)")
    render.add_argument("--cam-pos", type=_parse_triple)
    render.add_argument("--cam-target", type=_parse_triple, default=(0.0, 0.0, 0.0))
    render.add_argument("--fov", type=float, default=45.0, help="vertical fov, degrees")
    render.add_argument("--size", type=_parse_size, default=(256, 256))
    render.add_argument("--material", choices=["default_gray", "glass", "water", "crystal", "pearl"])
    render.add_argument("--scale", type=float, default=1.0)
    render.add_argument("--workers", type=int, default=1)
    render.add_argument("--force-mip-level", type=int)
    render.add_argument("--raw-dims", type=_parse_triple)
    render.add_argument("--raw-dtype", choices=["u8", "u16", "f32"], default="u8")
    render.add_argument("--raw-endian", choices=["little", "big"], default="little")
    render.add_argument("--raw-skip", type=int, default=0)
    render.add_argument("--out", type=Path, required=True)

    mc = sub.add_parser("mc", help="extract an isosurface mesh")
    mc.add_argument("--volume", type=Path, required=True)
    mc.add_argument("--iso", type=float, default=0.5)
    mc.add_argument("--out", type=Path, required=True, help=".obj or .stl")
    mc.add_argument("--raw-dims", type=_parse_triple)
    mc.add_argument("--raw-dtype", choices=["u8", "u16", "f32"], default="u8")
    mc.add_argument("--raw-endian", choices=["little", "big"], default="little")
    mc.add_argument("--raw-skip", type=int, default=0)

    broker = sub.add_parser("broker", help="run the signaling broker")
    broker.add_argument("--listen", type=_parse_endpoint, default=("127.0.0.1", 1883))

    for name in ("host", "join"):
        p = sub.add_parser(name, help="start a session node (+ optional gateway)")
        p.add_argument("--room", default="default")
        p.add_argument("--broker", type=_parse_endpoint, default=None,
                       help="host:port (env VOXROOM_BROKER as fallback)")
        p.add_argument("--gateway", type=int, default=None, help="WebSocket gateway port")
        p.add_argument("--listen-port", type=int, default=0, help="peer channel port")
        p.add_argument("--name", default=name)
        p.add_argument("--solo", action="store_true", help="no broker, standalone node")
        p.add_argument("--ui", type=Path, default=None, help="static UI directory to serve")
        p.add_argument("--join-timeout", type=float, default=8.0)

    sim = sub.add_parser("simulate", help="run a net-sim scenario file")
    sim.add_argument("scenario", type=Path)
    sim.add_argument("--trace", type=Path, default=None, help="write JSONL trace here")
    return parser


def _load_volume(args) -> "object":
    from .gateway import load_specimen_file
    from .ingest import RawDescriptor

    descriptor = None
    if args.raw_dims is not None:
        descriptor = RawDescriptor(
            dims=tuple(int(d) for d in args.raw_dims),
            dtype=args.raw_dtype,
            endianness=args.raw_endian,
            header_skip=args.raw_skip,
        )
    kind, _digest, renderable = load_specimen_file(args.volume, descriptor=descriptor)
    if kind != "volume":
        raise VoxroomError(f"{args.volume} is not a volume")
    return renderable


def _default_camera(extent: float, size: tuple[int, int], fov_deg: float,
                    pos=None, target=(0.0, 0.0, 0.0)):
    from .render import Camera

    if pos is None:
        distance = max(extent, 1.0) * 1.4 / math.tan(math.radians(fov_deg) / 2.0)
        pos = (0.0, 0.0, distance)
    return Camera.look_at(
        position=pos, target=target, vertical_fov=math.radians(fov_deg),
        width=size[0], height=size[1],
    )


def cmd_render(args) -> int:
    from .gateway import load_specimen_file, resolve_lut
    from .render import (
        MATERIAL_PRESETS,
        ExclusionPlane,
        VizParams,
        render_mesh_frame,
        render_volume_frame,
    )

    if (args.volume is None) == (args.mesh is None):
        print("render: exactly one of --volume / --mesh is required", file=sys.stderr)
        return EXIT_USAGE
    if args.volume is not None and args.material is not None:
        print("render: --material applies to meshes, not volumes", file=sys.stderr)
        return EXIT_USAGE

    quality = {"med": "medium"}.get(args.quality, args.quality)
    try:
        if args.volume is not None:
            renderable = _load_volume(args)
            volume = renderable.volume
            nx, ny, nz = volume.dims
            extent = max(
                (nx - 1) * volume.spacing[0], (ny - 1) * volume.spacing[1],
                (nz - 1) * volume.spacing[2],
            ) * args.scale
            camera = _default_camera(extent, args.size, args.fov, args.cam_pos, args.cam_target)
            lut = resolve_lut(args.lut)
            planes = tuple(
                ExclusionPlane(normal=(nx_, ny_, nz_), offset=off)
                for nx_, ny_, nz_, off in args.plane
            )
            viz = VizParams(
                lut=lut, opacity_scale=args.opacity, quality=quality,
                planes=planes, scale=args.scale,
            )
            frame = render_volume_frame(
                volume, camera, viz, pyramid=renderable.pyramid,
                workers=args.workers, force_mip_level=args.force_mip_level,
            )
        else:
            kind, _digest, renderable = load_specimen_file(args.mesh)
            if kind != "mesh":
                print(f"render: {args.mesh} is not a mesh", file=sys.stderr)
                return EXIT_USAGE
            mesh = renderable.mesh
            span = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0) if mesh.vertex_count else [1]
            camera = _default_camera(float(max(span)) * args.scale, args.size, args.fov,
                                     args.cam_pos, args.cam_target)
            material = MATERIAL_PRESETS[args.material or "default_gray"]
            frame = render_mesh_frame(mesh, camera, material)
    except (VoxroomError, OSError) as exc:
        print(f"render: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args.out.write_bytes(frame.to_png())
    print(f"wrote {args.out} ({frame.width}x{frame.height})")
    return EXIT_OK


def cmd_mc(args) -> int:
    from .ingest import save_obj, save_stl
    from .isosurface import marching_cubes, mesh_stats

    if not (0.0 < args.iso < 1.0):
        print(f"mc: --iso must lie in (0, 1), got {args.iso}", file=sys.stderr)
        return EXIT_USAGE
    suffix = args.out.suffix.lower()
    if suffix not in (".obj", ".stl"):
        print(f"mc: --out must end in .obj or .stl, got {args.out}", file=sys.stderr)
        return EXIT_USAGE
    try:
        renderable = _load_volume(args)
    except (VoxroomError, OSError) as exc:
        print(f"mc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = marching_cubes(renderable.volume, args.iso)
    stats = mesh_stats(result.mesh)
    if stats["triangle_count"] == 0:
        print("mc: warning: empty mesh (no isovalue crossings)", file=sys.stderr)
    if suffix == ".obj":
        args.out.write_text(save_obj(result.mesh))
    else:
        args.out.write_bytes(save_stl(result.mesh))
    print(
        f"wrote {args.out}: {stats['triangle_count']} triangles, "
        f"{stats['boundary_edge_count']} boundary edges"
    )
    return EXIT_OK


def cmd_broker(args) -> int:
    from .broker import broker_serve

    async def main() -> None:
        server = await broker_serve(args.listen[0], args.listen[1])
        print(f"broker listening on {server.host}:{server.port}", flush=True)
        try:
            await asyncio.Event().wait()
        finally:
            await server.stop()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    except OSError as exc:
        print(f"broker: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    return EXIT_OK


def cmd_session(args) -> int:
    import os

    from .gateway import SpecimenStore, create_gateway_app
    from .runtime import AsyncioSessionHost, LocalSession
    from .sync import PeerInfo, SessionNode, new_peer_id

    async def main() -> int:
        if args.solo:
            session = LocalSession(room_id=args.room, display_name=args.name)
            host = None
        else:
            broker = args.broker
            if broker is None:
                env = os.environ.get("VOXROOM_BROKER")
                if env is None:
                    print("session: --broker or VOXROOM_BROKER required (or --solo)",
                          file=sys.stderr)
                    return EXIT_USAGE
                broker = _parse_endpoint(env)
            info = PeerInfo(
                peer_id=new_peer_id(),
                endpoint=f"127.0.0.1:{args.listen_port}",
                display_name=args.name,
            )
            node = SessionNode(args.room, info)
            host = AsyncioSessionHost(
                node, broker[0], broker[1], listen_port=args.listen_port
            )
            try:
                await host.start()
                await host.wait_joined(timeout=args.join_timeout)
            except JoinError as exc:
                print(f"join: {exc}", file=sys.stderr)
                await host.stop()
                return EXIT_NETWORK
            session = host
            print(f"joined room {args.room!r} as {node.id[:8]} "
                  f"(peers: {len(node.replica.peers) - 1})", flush=True)

        if args.gateway is not None:
            import uvicorn

            app = create_gateway_app(session, SpecimenStore(), static_dir=args.ui)
            config = uvicorn.Config(app, host="127.0.0.1", port=args.gateway, log_level="warning")
            server = uvicorn.Server(config)
            serve_task = asyncio.ensure_future(server.serve())
            while not server.started and not serve_task.done():
                await asyncio.sleep(0.05)
            if serve_task.done():
                print(f"gateway failed to bind port {args.gateway}", file=sys.stderr)
                return EXIT_NETWORK
            print(f"gateway on ws://127.0.0.1:{args.gateway}/ws", flush=True)
            await serve_task
        else:
            await asyncio.Event().wait()
        if host is not None:
            await host.stop()
        return EXIT_OK

    try:
        return asyncio.run(main())
    except KeyboardInterrupt:
        return EXIT_OK


def cmd_simulate(args) -> int:
    from .errors import ScenarioError
    from .netsim import SimConfig, run_scenario

    try:
        config, nodes, script = SimConfig.from_json(args.scenario.read_text())
        sim = run_scenario(config, nodes, script)
    except (OSError, ValueError, ScenarioError) as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    digests = {name: host.node.replica.digest().hex()[:16] for name, host in sim.hosts.items()}
    print(f"trace hash: {sim.trace_hash()}")
    print(f"events: {len(sim.trace)}")
    for name, digest in sorted(digests.items()):
        print(f"  {name}: state={sim.hosts[name].node.state} digest={digest}")
    if args.trace is not None:
        args.trace.write_text(sim.trace_jsonl())
        print(f"trace written to {args.trace}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "render": cmd_render,
        "mc": cmd_mc,
        "broker": cmd_broker,
        "host": cmd_session,
        "join": cmd_session,
        "simulate": cmd_simulate,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
