"""Publish/subscribe signaling broker with an MQTT-style topic scheme.

The broker exists purely as a rendezvous for peers that have not met yet:
QoS 0, no retained messages, no persistent sessions. Framing is a custom
length-prefixed layout (see protocol.md) rather than MQTT bytes; topic
matching follows the familiar '#' multi-level wildcard rules.

``BrokerCore`` is transport-free: callers feed raw bytes per connection and
get back (connection, frame) send actions plus close decisions. The asyncio
TCP server and the in-process simulator both drive this one core, so every
routing rule is exercised identically under test and in production.
"""

from __future__ import annotations

import asyncio
import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import ProtocolError

log = logging.getLogger(__name__)

MAX_PAYLOAD = 64 * 1024
MAX_FRAME = MAX_PAYLOAD + 4096


class PacketKind(IntEnum):
    CONNECT = 1
    CONNACK = 2
    SUBSCRIBE = 3
    SUBACK = 4
    PUBLISH = 5
    PING = 6
    PONG = 7
    DISCONNECT = 8


@dataclass(frozen=True)
class BrokerPacket:
    kind: PacketKind
    client_id: str = ""
    topic: str = ""
    payload: bytes = b""
    # correlation id kept for callers; QoS 0 framing does not carry it
    packet_id: int = 0


# --- topic handling -------------------------------------------------------

def validate_topic(topic: str, *, allow_wildcard: bool) -> list[str]:
    """Split and check segments; returns them. '#' only ends a filter."""
    if not topic:
        raise ProtocolError("empty topic")
    segments = topic.split("/")
    for i, seg in enumerate(segments):
        if seg == "":
            raise ProtocolError(f"empty segment in topic {topic!r}")
        if "#" in seg:
            if not allow_wildcard:
                raise ProtocolError(f"wildcard in publish topic {topic!r}")
            if seg != "#" or i != len(segments) - 1:
                raise ProtocolError(f"'#' must be the final segment: {topic!r}")
    return segments


def match_filter(filter_topic: str, topic: str) -> bool:
    """True when the filter covers the topic ('#' swallows the rest, and a
    parent filter like a/# also matches 'a' itself)."""
    fsegs = validate_topic(filter_topic, allow_wildcard=True)
    tsegs = validate_topic(topic, allow_wildcard=False)
    for i, fseg in enumerate(fsegs):
        if fseg == "#":
            return True
        if i >= len(tsegs) or tsegs[i] != fseg:
            return False
    if len(tsegs) == len(fsegs):
        return True
    # "a/#" matches "a": the '#' case returned above, so any leftover fails
    return False


# --- wire framing ---------------------------------------------------------

def encode_packet(packet: BrokerPacket) -> bytes:
    """Big-endian: u32 body length, then u8 kind, u16+client_id, u16+topic,
    u32+payload."""
    cid = packet.client_id.encode("utf-8")
    topic = packet.topic.encode("utf-8")
    if packet.payload and packet.kind != PacketKind.PUBLISH:
        raise ProtocolError("payload only allowed on PUBLISH")
    if len(packet.payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload {len(packet.payload)} exceeds {MAX_PAYLOAD}")
    body = (
        struct.pack(">B", packet.kind)
        + struct.pack(">H", len(cid)) + cid
        + struct.pack(">H", len(topic)) + topic
        + struct.pack(">I", len(packet.payload)) + packet.payload
    )
    return struct.pack(">I", len(body)) + body


def decode_packet(body: bytes) -> BrokerPacket:
    try:
        (kind_raw,) = struct.unpack_from(">B", body, 0)
        kind = PacketKind(kind_raw)
        off = 1
        (cid_len,) = struct.unpack_from(">H", body, off)
        off += 2
        cid = body[off : off + cid_len].decode("utf-8")
        off += cid_len
        (topic_len,) = struct.unpack_from(">H", body, off)
        off += 2
        topic = body[off : off + topic_len].decode("utf-8")
        off += topic_len
        (payload_len,) = struct.unpack_from(">I", body, off)
        off += 4
        payload = bytes(body[off : off + payload_len])
        if len(payload) != payload_len or off + payload_len != len(body):
            raise ProtocolError("frame length mismatch")
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed frame: {exc}") from exc
    if payload and kind != PacketKind.PUBLISH:
        raise ProtocolError("payload only allowed on PUBLISH")
    return BrokerPacket(kind=kind, client_id=cid, topic=topic, payload=payload)


class FrameDecoder:
    """Reassembles length-prefixed frames from a byte stream."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[BrokerPacket]:
        self._buf += data
        packets = []
        while len(self._buf) >= 4:
            (length,) = struct.unpack_from(">I", self._buf, 0)
            if length > MAX_FRAME:
                raise ProtocolError(f"frame of {length} bytes exceeds limit")
            if len(self._buf) < 4 + length:
                break
            body = bytes(self._buf[4 : 4 + length])
            del self._buf[: 4 + length]
            packets.append(decode_packet(body))
        return packets


# --- broker state machine -------------------------------------------------

@dataclass
class _Connection:
    decoder: FrameDecoder = field(default_factory=FrameDecoder)
    client_id: str | None = None
    subscriptions: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Send:
    conn_id: int
    data: bytes


@dataclass(frozen=True)
class Close:
    conn_id: int
    reason: str = ""


Action = Send | Close


class BrokerCore:
    """Routing core: feed bytes per connection, receive send/close actions.

    Routing is at-most-once per connection: a PUBLISH reaches a subscriber
    exactly once even when several of its filters match.
    """

    def __init__(self) -> None:
        self._conns: dict[int, _Connection] = {}
        self._by_client_id: dict[str, int] = {}

    @property
    def live_connections(self) -> int:
        return len(self._conns)

    def connection_opened(self, conn_id: int) -> None:
        self._conns[conn_id] = _Connection()

    def connection_closed(self, conn_id: int) -> None:
        conn = self._conns.pop(conn_id, None)
        if conn and conn.client_id and self._by_client_id.get(conn.client_id) == conn_id:
            del self._by_client_id[conn.client_id]

    def data_received(self, conn_id: int, data: bytes) -> list[Action]:
        conn = self._conns.get(conn_id)
        if conn is None:
            return []
        try:
            packets = conn.decoder.feed(data)
        except ProtocolError as exc:
            self.connection_closed(conn_id)
            return [Close(conn_id, reason=str(exc))]
        actions: list[Action] = []
        for packet in packets:
            try:
                actions.extend(self._handle(conn_id, conn, packet))
            except ProtocolError as exc:
                self.connection_closed(conn_id)
                actions.append(Close(conn_id, reason=str(exc)))
                break
            if conn_id not in self._conns:
                break
        return actions

    def _handle(self, conn_id: int, conn: _Connection, packet: BrokerPacket) -> list[Action]:
        if packet.kind == PacketKind.CONNECT:
            if not packet.client_id:
                raise ProtocolError("CONNECT requires a client_id")
            actions: list[Action] = []
            stale = self._by_client_id.get(packet.client_id)
            if stale is not None and stale != conn_id:
                self.connection_closed(stale)
                actions.append(Close(stale, reason="client id taken over"))
            conn.client_id = packet.client_id
            self._by_client_id[packet.client_id] = conn_id
            actions.append(
                Send(conn_id, encode_packet(BrokerPacket(PacketKind.CONNACK, client_id=packet.client_id)))
            )
            return actions
        if conn.client_id is None:
            raise ProtocolError(f"{packet.kind.name} before CONNECT")
        if packet.kind == PacketKind.SUBSCRIBE:
            validate_topic(packet.topic, allow_wildcard=True)
            if packet.topic not in conn.subscriptions:
                conn.subscriptions.append(packet.topic)
            return [Send(conn_id, encode_packet(BrokerPacket(PacketKind.SUBACK, topic=packet.topic)))]
        if packet.kind == PacketKind.PUBLISH:
            validate_topic(packet.topic, allow_wildcard=False)
            out = encode_packet(
                BrokerPacket(
                    PacketKind.PUBLISH,
                    client_id=conn.client_id,
                    topic=packet.topic,
                    payload=packet.payload,
                )
            )
            actions = []
            for other_id, other in self._conns.items():
                if any(match_filter(f, packet.topic) for f in other.subscriptions):
                    actions.append(Send(other_id, out))
            return actions
        if packet.kind == PacketKind.PING:
            return [Send(conn_id, encode_packet(BrokerPacket(PacketKind.PONG)))]
        if packet.kind == PacketKind.DISCONNECT:
            self.connection_closed(conn_id)
            return [Close(conn_id, reason="client disconnect")]
        raise ProtocolError(f"unexpected packet kind {packet.kind.name}")


# --- asyncio transport ----------------------------------------------------

class BrokerServer:
    """TCP front end for BrokerCore (one asyncio loop, routing serialized)."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.host = host
        self.port = port
        self.core = BrokerCore()
        self._writers: dict[int, asyncio.StreamWriter] = {}
        self._next_id = 0
        self._server: asyncio.AbstractServer | None = None

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._client, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("broker listening on %s:%d", self.host, self.port)

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for writer in list(self._writers.values()):
            writer.close()
        self._writers.clear()

    def _apply(self, actions: list[Action]) -> None:
        for action in actions:
            if isinstance(action, Send):
                writer = self._writers.get(action.conn_id)
                if writer is not None and not writer.is_closing():
                    writer.write(action.data)
            else:
                writer = self._writers.pop(action.conn_id, None)
                if writer is not None:
                    writer.close()

    async def _client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn_id = self._next_id
        self._next_id += 1
        self._writers[conn_id] = writer
        self.core.connection_opened(conn_id)
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                self._apply(self.core.data_received(conn_id, data))
                if conn_id not in self._writers:
                    return
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            if conn_id in self._writers:
                del self._writers[conn_id]
                self.core.connection_closed(conn_id)
                writer.close()


async def broker_serve(host: str = "127.0.0.1", port: int = 1883) -> BrokerServer:
    server = BrokerServer(host, port)
    await server.start()
    return server
