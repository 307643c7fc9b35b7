"""Hosts that drive a SessionNode outside the simulator.

``LocalSession`` runs a node standalone (no broker, no peers) for solo
viewing and gateway fixtures. ``AsyncioSessionHost`` gives the node real
transports: a TCP broker link, TCP reliable peer channels (length-prefixed
sync messages after a 16-byte peer-id preamble) and UDP datagrams for the
unreliable channel. Both hosts execute the same action vocabulary the
simulator does; the node cannot tell them apart.
"""

from __future__ import annotations

import asyncio
import logging
import struct
import threading
import time
from typing import Callable

from .broker import FrameDecoder, PacketKind
from .errors import JoinError
from .sync import (
    BrokerSend,
    ClosePeer,
    DialPeer,
    JoinFailed,
    PeerInfo,
    PeersChanged,
    SceneChanged,
    SendReliable,
    SendUnreliable,
    SessionNode,
    SetTimer,
)

log = logging.getLogger(__name__)


class LocalSession:
    """Single-node session: local writes apply instantly, nothing is sent."""

    def __init__(self, room_id: str = "local", display_name: str = "local"):
        from .sync import new_peer_id

        info = PeerInfo(peer_id=new_peer_id(), endpoint="local:0", display_name=display_name)
        self.node = SessionNode(room_id, info)
        self.node.state = "active"
        self._lock = threading.Lock()
        self.listeners: list[Callable[[str], None]] = []

    def now_ms(self) -> float:
        return time.monotonic() * 1000.0

    def submit(self, fn: Callable[[SessionNode, float], list]) -> None:
        with self._lock:
            actions = fn(self.node, self.now_ms())
        self._notify(actions)

    def _notify(self, actions: list) -> None:
        changed = set()
        for action in actions:
            if isinstance(action, SceneChanged):
                changed.add("scene")
            elif isinstance(action, PeersChanged):
                changed.add("peers")
        for kind in changed:
            for listener in list(self.listeners):
                listener(kind)

    def snapshot(self):
        with self._lock:
            specimens = dict(self.node.replica.specimens)
            peers = {
                pid: (p.info, p.pose, p.connected)
                for pid, p in self.node.replica.peers.items()
            }
        return specimens, peers

    @property
    def peer_id(self) -> str:
        return self.node.id

    @property
    def room(self) -> str:
        return self.node.room


class AsyncioSessionHost:
    """Real-network host: broker TCP + per-peer TCP/UDP channel pairs."""

    def __init__(
        self,
        node: SessionNode,
        broker_host: str,
        broker_port: int,
        listen_host: str = "127.0.0.1",
        listen_port: int = 0,
    ):
        self.node = node
        self.broker_host = broker_host
        self.broker_port = broker_port
        self.listen_host = listen_host
        self.listen_port = listen_port
        self.loop: asyncio.AbstractEventLoop | None = None
        self._broker_writer: asyncio.StreamWriter | None = None
        self._broker_decoder = FrameDecoder()
        self._reliable: dict[str, asyncio.StreamWriter] = {}
        self._udp: asyncio.DatagramTransport | None = None
        self._peer_udp_addr: dict[str, tuple[str, int]] = {}
        self._server: asyncio.AbstractServer | None = None
        self._tasks: set[asyncio.Task] = set()
        self.join_failed: str | None = None
        self.joined = asyncio.Event()
        self.listeners: list[Callable[[str], None]] = []

    # -- public session interface (same shape as LocalSession) ---------------

    def now_ms(self) -> float:
        assert self.loop is not None
        return self.loop.time() * 1000.0

    def submit(self, fn: Callable[[SessionNode, float], list]) -> None:
        self.execute(fn(self.node, self.now_ms()))

    def snapshot(self):
        specimens = dict(self.node.replica.specimens)
        peers = {
            pid: (p.info, p.pose, p.connected) for pid, p in self.node.replica.peers.items()
        }
        return specimens, peers

    @property
    def peer_id(self) -> str:
        return self.node.id

    @property
    def room(self) -> str:
        return self.node.room

    # -- lifecycle -------------------------------------------------------------

    async def start(self) -> None:
        self.loop = asyncio.get_running_loop()
        await self._start_channel_listeners()
        try:
            reader, writer = await asyncio.open_connection(self.broker_host, self.broker_port)
        except OSError as exc:
            raise JoinError(f"broker unreachable at {self.broker_host}:{self.broker_port}: {exc}")
        self._broker_writer = writer
        self._spawn(self._broker_reader(reader))
        self.execute(self.node.start(self.now_ms()))

    async def wait_joined(self, timeout: float = 10.0) -> None:
        try:
            await asyncio.wait_for(self.joined.wait(), timeout)
        except asyncio.TimeoutError:
            raise JoinError(self.join_failed or "join timed out")
        if self.join_failed:
            raise JoinError(self.join_failed)

    async def stop(self) -> None:
        for task in list(self._tasks):
            task.cancel()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        if self._udp is not None:
            self._udp.close()
        for writer in list(self._reliable.values()):
            writer.close()
        if self._broker_writer is not None:
            self._broker_writer.close()

    def _spawn(self, coro) -> None:
        task = asyncio.ensure_future(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    # -- action execution --------------------------------------------------------

    def execute(self, actions: list) -> None:
        changed = set()
        for action in actions:
            if isinstance(action, BrokerSend):
                if self._broker_writer is not None and not self._broker_writer.is_closing():
                    self._broker_writer.write(action.data)
            elif isinstance(action, SetTimer):
                assert self.loop is not None
                self.loop.call_later(
                    action.delay_ms / 1000.0,
                    lambda n=action.name, t=action.token: self.execute(
                        self.node.on_timer(n, t, self.now_ms())
                    ),
                )
            elif isinstance(action, DialPeer):
                self._spawn(self._dial(action.peer_id, action.endpoint))
            elif isinstance(action, SendReliable):
                writer = self._reliable.get(action.peer_id)
                if writer is not None and not writer.is_closing():
                    writer.write(struct.pack(">I", len(action.data)) + action.data)
            elif isinstance(action, SendUnreliable):
                addr = self._peer_udp_addr.get(action.peer_id)
                if addr is not None and self._udp is not None:
                    self._udp.sendto(action.data, addr)
            elif isinstance(action, ClosePeer):
                writer = self._reliable.pop(action.peer_id, None)
                if writer is not None:
                    writer.close()
                self._peer_udp_addr.pop(action.peer_id, None)
            elif isinstance(action, JoinFailed):
                self.join_failed = action.reason
                self.joined.set()
            elif isinstance(action, SceneChanged):
                changed.add("scene")
            elif isinstance(action, PeersChanged):
                changed.add("peers")
        if self.node.state == "active" and not self.joined.is_set():
            self.joined.set()
        for kind in changed:
            for listener in list(self.listeners):
                listener(kind)

    # -- broker link ---------------------------------------------------------------

    async def _broker_reader(self, reader: asyncio.StreamReader) -> None:
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                for packet in self._broker_decoder.feed(data):
                    if packet.kind == PacketKind.CONNACK:
                        self.execute(self.node.on_broker_connack(self.now_ms()))
                    elif packet.kind == PacketKind.PUBLISH:
                        self.execute(
                            self.node.on_broker_publish(
                                packet.topic, packet.payload, self.now_ms()
                            )
                        )
        except (ConnectionError, asyncio.CancelledError):
            pass
        finally:
            self.execute(self.node.on_broker_down(self.now_ms()))

    # -- peer channels ---------------------------------------------------------------

    async def _start_channel_listeners(self) -> None:
        self._server = await asyncio.start_server(
            self._accept_reliable, self.listen_host, self.listen_port
        )
        self.listen_port = self._server.sockets[0].getsockname()[1]

        loop = asyncio.get_running_loop()
        self._udp, _ = await loop.create_datagram_endpoint(
            lambda: _UdpChannel(self), local_addr=(self.listen_host, self.listen_port)
        )
        # advertise the real port once it is known
        self.node.info = PeerInfo(
            peer_id=self.node.info.peer_id,
            endpoint=f"{self.listen_host}:{self.listen_port}",
            display_name=self.node.info.display_name,
        )

    async def _dial(self, peer_id: str, endpoint: str) -> None:
        host, _, port = endpoint.rpartition(":")
        try:
            reader, writer = await asyncio.open_connection(host, int(port))
        except OSError as exc:
            log.warning("dial %s failed: %s", endpoint, exc)
            self.execute(self.node.on_channel_closed(peer_id, self.now_ms()))
            return
        writer.write(bytes.fromhex(self.node.id))
        self._reliable[peer_id] = writer
        self._peer_udp_addr[peer_id] = (host, int(port))
        self.execute(self.node.on_channel_open(peer_id, self.now_ms()))
        self._spawn(self._reliable_reader(peer_id, reader))

    async def _accept_reliable(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        try:
            preamble = await reader.readexactly(16)
        except (asyncio.IncompleteReadError, ConnectionError):
            writer.close()
            return
        peer_id = preamble.hex()
        if peer_id in self._reliable and self.node.id >= peer_id:
            # simultaneous dial race: higher id keeps its own outbound link
            writer.close()
            return
        self._reliable[peer_id] = writer
        peername = writer.get_extra_info("peername")
        presence = self.node.replica.peers.get(peer_id)
        if presence is not None:
            host, _, port = presence.info.endpoint.rpartition(":")
            self._peer_udp_addr[peer_id] = (host, int(port))
        elif peername:
            self._peer_udp_addr[peer_id] = (peername[0], peername[1])
        self.execute(self.node.on_channel_open(peer_id, self.now_ms()))
        await self._reliable_reader(peer_id, reader)

    async def _reliable_reader(self, peer_id: str, reader: asyncio.StreamReader) -> None:
        try:
            while True:
                header = await reader.readexactly(4)
                (length,) = struct.unpack(">I", header)
                data = await reader.readexactly(length)
                self.execute(self.node.on_channel_data(peer_id, data, self.now_ms()))
        except (asyncio.IncompleteReadError, ConnectionError, asyncio.CancelledError):
            pass
        finally:
            if self._reliable.get(peer_id) is not None:
                self._reliable.pop(peer_id, None)
                self.execute(self.node.on_channel_closed(peer_id, self.now_ms()))


class _UdpChannel(asyncio.DatagramProtocol):
    def __init__(self, host: AsyncioSessionHost):
        self.host = host

    def datagram_received(self, data: bytes, addr) -> None:
        # sync messages are self-describing; byte 2..18 is the sender id
        if len(data) < 26:
            return
        sender = data[2:18].hex()
        self.host.execute(self.host.node.on_channel_data(sender, data, self.host.now_ms()))
