"""Session node: peer discovery over the broker, full-mesh channels, and
LWW scene replication.

The node is a pure state machine: every inbox entry (broker traffic,
channel data, timer, local command) is a method taking the current time in
ms and returning a list of actions for the host to execute. Hosts own all
I/O and timers; the deterministic simulator and the asyncio runtime drive
this same class, so protocol behavior tested under simulation is the
behavior deployed on real sockets.

Discovery contract: a joiner publishes HELLO on room/<room>/presence; every
existing peer replies OFFER on room/<room>/peer/<joiner> carrying its
endpoint; the joiner ANSWERs and dials one reliable + one unreliable
channel. After the mesh link opens, the joiner pulls a snapshot from the
lowest peer id, buffering live deltas until the snapshot lands. The broker
is signaling-only: once channels exist, peers converge without it.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..broker import BrokerPacket, PacketKind, encode_packet
from ..errors import ProtocolError
from .state import PeerInfo, PeerPresence, SceneReplica, bump_record, make_specimen_record
from .wire import (
    MsgKind,
    PoseRecord,
    SpecimenRecord,
    SyncMessage,
    TransformRecord,
    VizRecord,
    decode_message,
    encode_message,
)

DISCOVERY_WINDOW_MS = 1500
SNAPSHOT_TIMEOUT_MS = 5000
JOIN_TIMEOUT_MS = 5000
ANTI_ENTROPY_MS = 2000
TRANSFORM_FLUSH_MS = 50  # 20 msgs/s per specimen


# --- actions ---------------------------------------------------------------

@dataclass(frozen=True)
class BrokerSend:
    data: bytes


@dataclass(frozen=True)
class DialPeer:
    peer_id: str
    endpoint: str


@dataclass(frozen=True)
class SendReliable:
    peer_id: str
    data: bytes


@dataclass(frozen=True)
class SendUnreliable:
    peer_id: str
    data: bytes


@dataclass(frozen=True)
class SetTimer:
    name: str
    delay_ms: int
    token: int


@dataclass(frozen=True)
class ClosePeer:
    peer_id: str


@dataclass(frozen=True)
class JoinFailed:
    reason: str


@dataclass(frozen=True)
class SceneChanged:
    pass


@dataclass(frozen=True)
class PeersChanged:
    pass


Action = object


class SessionNode:
    def __init__(self, room_id: str, info: PeerInfo):
        self.room = room_id
        self.info = info
        self.id = info.peer_id
        self.replica = SceneReplica()
        self.replica.peers[self.id] = PeerPresence(info=info, connected=True)
        self.state = "idle"  # idle -> connecting -> syncing -> active -> left
        self.broker_ok = False
        self.connected: set[str] = set()
        self.pending_dials: set[str] = set()
        self.seq = 0
        self.snapshot_tried: set[str] = set()
        self.snapshot_pending_from: str | None = None
        self.pull_inflight: set[str] = set()
        self.buffered: list[tuple[str, bytes]] = []
        self.pending_transforms: dict[str, tuple[str, object]] = {}
        self.flush_armed = False
        self.last_transform_send: dict[str, float] = {}
        self.timer_tokens: dict[str, int] = {}

    # -- helpers ------------------------------------------------------------

    def _timer(self, name: str, delay_ms: int) -> SetTimer:
        token = self.timer_tokens.get(name, 0) + 1
        self.timer_tokens[name] = token
        return SetTimer(name, delay_ms, token)

    def _timer_current(self, name: str, token: int) -> bool:
        return self.timer_tokens.get(name) == token

    def _publish(self, topic: str, msg: SyncMessage) -> BrokerSend:
        packet = BrokerPacket(PacketKind.PUBLISH, topic=topic, payload=encode_message(msg))
        return BrokerSend(encode_packet(packet))

    def _presence_topic(self) -> str:
        return f"room/{self.room}/presence"

    def _peer_topic(self, peer_id: str) -> str:
        return f"room/{self.room}/peer/{peer_id}"

    def _broadcast_reliable(self, msg: SyncMessage) -> list[Action]:
        data = encode_message(msg)
        return [SendReliable(p, data) for p in sorted(self.connected)]

    def _snapshot_message(self, kind: MsgKind) -> SyncMessage:
        records = tuple(self.replica.specimens[k] for k in sorted(self.replica.specimens))
        return SyncMessage(
            kind=kind, sender=self.id, records=records,
            lamport_clock=self.replica.lamport_clock,
        )

    # -- lifecycle ----------------------------------------------------------

    def start(self, now_ms: float) -> list[Action]:
        """Begin joining: connect to the broker (host already dialed TCP)."""
        self.state = "connecting"
        connect = BrokerPacket(PacketKind.CONNECT, client_id=self.id)
        return [BrokerSend(encode_packet(connect)), self._timer("join_timeout", JOIN_TIMEOUT_MS)]

    def on_broker_connack(self, now_ms: float) -> list[Action]:
        self.broker_ok = True
        hello = SyncMessage(
            kind=MsgKind.HELLO, sender=self.id,
            peer_endpoint=self.info.endpoint, peer_name=self.info.display_name,
        )
        sub1 = BrokerPacket(PacketKind.SUBSCRIBE, topic=self._presence_topic())
        sub2 = BrokerPacket(PacketKind.SUBSCRIBE, topic=self._peer_topic(self.id))
        return [
            BrokerSend(encode_packet(sub1)),
            BrokerSend(encode_packet(sub2)),
            self._publish(self._presence_topic(), hello),
            self._timer("discovery", DISCOVERY_WINDOW_MS),
        ]

    def on_broker_down(self, now_ms: float) -> list[Action]:
        """Signaling lost; the data plane between connected peers lives on."""
        self.broker_ok = False
        if self.state == "connecting":
            self.state = "left"
            return [JoinFailed("broker unreachable")]
        return []

    # -- broker traffic -------------------------------------------------------

    def on_broker_publish(self, topic: str, payload: bytes, now_ms: float) -> list[Action]:
        try:
            msg = decode_message(payload)
        except ProtocolError:
            return []
        if msg.sender == self.id:
            return []
        if msg.kind == MsgKind.HELLO:
            return self._on_hello(msg)
        if msg.kind == MsgKind.OFFER:
            return self._on_offer(msg)
        if msg.kind == MsgKind.ANSWER:
            return self._on_answer(msg)
        return []

    def _remember_peer(self, msg: SyncMessage) -> bool:
        fresh = msg.sender not in self.replica.peers
        info = PeerInfo(peer_id=msg.sender, endpoint=msg.peer_endpoint, display_name=msg.peer_name)
        presence = self.replica.peers.get(msg.sender)
        if presence is None:
            self.replica.peers[msg.sender] = PeerPresence(info=info)
        else:
            presence.info = info
        return fresh

    def _on_hello(self, msg: SyncMessage) -> list[Action]:
        # an existing peer answers a joiner with its own coordinates
        self._remember_peer(msg)
        offer = SyncMessage(
            kind=MsgKind.OFFER, sender=self.id,
            peer_endpoint=self.info.endpoint, peer_name=self.info.display_name,
        )
        return [self._publish(self._peer_topic(msg.sender), offer), PeersChanged()]

    def _on_offer(self, msg: SyncMessage) -> list[Action]:
        self._remember_peer(msg)
        actions: list[Action] = [PeersChanged()]
        if msg.sender not in self.connected and msg.sender not in self.pending_dials:
            answer = SyncMessage(
                kind=MsgKind.ANSWER, sender=self.id,
                peer_endpoint=self.info.endpoint, peer_name=self.info.display_name,
            )
            actions.append(self._publish(self._peer_topic(msg.sender), answer))
            self.pending_dials.add(msg.sender)
            actions.append(DialPeer(msg.sender, msg.peer_endpoint))
        return actions

    def _on_answer(self, msg: SyncMessage) -> list[Action]:
        self._remember_peer(msg)
        return [PeersChanged()]

    # -- channel lifecycle ----------------------------------------------------

    def on_channel_open(self, peer_id: str, now_ms: float) -> list[Action]:
        self.pending_dials.discard(peer_id)
        self.connected.add(peer_id)
        presence = self.replica.peers.get(peer_id)
        if presence is not None:
            presence.connected = True
        actions: list[Action] = [PeersChanged()]
        if self.state in ("connecting", "syncing") and self.snapshot_pending_from is None:
            actions.extend(self._request_snapshot(now_ms))
        return actions

    def on_channel_closed(self, peer_id: str, now_ms: float) -> list[Action]:
        self.connected.discard(peer_id)
        self.pending_dials.discard(peer_id)
        self.replica.peers.pop(peer_id, None)
        return [PeersChanged()]

    def _request_snapshot(self, now_ms: float) -> list[Action]:
        candidates = sorted(p for p in self.connected if p not in self.snapshot_tried)
        if not candidates:
            return self._go_active(now_ms)
        source = candidates[0]
        self.state = "syncing"
        self.snapshot_pending_from = source
        self.snapshot_tried.add(source)
        msg = self._snapshot_message(MsgKind.SNAPSHOT_REQUEST)
        return [
            SendReliable(source, encode_message(msg)),
            self._timer("snapshot_timeout", SNAPSHOT_TIMEOUT_MS),
        ]

    def _go_active(self, now_ms: float) -> list[Action]:
        if self.state == "active":
            return []
        self.state = "active"
        self.snapshot_pending_from = None
        actions: list[Action] = [self._timer("anti_entropy", ANTI_ENTROPY_MS), SceneChanged()]
        buffered, self.buffered = self.buffered, []
        for peer_id, data in buffered:
            actions.extend(self.on_channel_data(peer_id, data, now_ms))
        return actions

    # -- channel traffic ------------------------------------------------------

    def on_channel_data(self, peer_id: str, data: bytes, now_ms: float) -> list[Action]:
        try:
            msg = decode_message(data)
        except ProtocolError:
            return []
        if msg.kind == MsgKind.SNAPSHOT_REQUEST:
            return self._on_snapshot_request(msg)
        if msg.kind == MsgKind.SNAPSHOT:
            return self._on_snapshot(msg, now_ms)
        if self.state == "syncing":
            self.buffered.append((peer_id, data))
            return []
        if msg.kind in (MsgKind.STATE_DELTA, MsgKind.GRAB, MsgKind.RELEASE):
            if msg.record is not None and self.replica.apply_record(msg.record):
                return [SceneChanged()]
            return []
        if msg.kind == MsgKind.TRANSFORM_UPDATE:
            if msg.pose is not None:
                if self.replica.apply_pose(msg.sender, msg.seq, msg.pose):
                    return [PeersChanged()]
                return []
            if msg.record is not None and self.replica.apply_transform_record(
                msg.sender, msg.seq, msg.record
            ):
                return [SceneChanged()]
            return []
        if msg.kind == MsgKind.DIGEST:
            return self._on_digest(msg)
        if msg.kind == MsgKind.LEAVE:
            return self.on_channel_closed(peer_id, now_ms) + [ClosePeer(peer_id)]
        return []

    def _on_snapshot_request(self, msg: SyncMessage) -> list[Action]:
        # push-pull: merge what the requester knows, then answer in kind
        changed = False
        for rec in msg.records:
            changed = self.replica.apply_record(rec) or changed
        reply = self._snapshot_message(MsgKind.SNAPSHOT)
        actions: list[Action] = [SendReliable(msg.sender, encode_message(reply))]
        if changed:
            actions.append(SceneChanged())
        return actions

    def _on_snapshot(self, msg: SyncMessage, now_ms: float) -> list[Action]:
        changed = False
        for rec in msg.records:
            changed = self.replica.apply_record(rec) or changed
        self.replica.lamport_clock = max(self.replica.lamport_clock, msg.lamport_clock) + 1
        self.pull_inflight.discard(msg.sender)
        actions: list[Action] = []
        if self.state in ("connecting", "syncing"):
            self.snapshot_pending_from = None
            actions.extend(self._go_active(now_ms))
        elif changed:
            actions.append(SceneChanged())
        return actions

    def _on_digest(self, msg: SyncMessage) -> list[Action]:
        mine = self.replica.digest()
        if msg.digest == mine:
            return []
        theirs_wins = (msg.max_lamport, msg.digest) > (self.replica.max_lamport(), mine)
        if theirs_wins and msg.sender not in self.pull_inflight:
            self.pull_inflight.add(msg.sender)
            pull = self._snapshot_message(MsgKind.SNAPSHOT_REQUEST)
            return [SendReliable(msg.sender, encode_message(pull))]
        return []

    # -- timers ---------------------------------------------------------------

    def on_timer(self, name: str, token: int, now_ms: float) -> list[Action]:
        if not self._timer_current(name, token):
            return []
        if name == "join_timeout":
            if self.state == "connecting" and not self.broker_ok:
                self.state = "left"
                return [JoinFailed("no broker answer")]
            return []
        if name == "discovery":
            if self.state == "connecting" and not self.pending_dials and not self.connected:
                return self._go_active(now_ms)
            if self.state == "connecting":
                return [self._timer("discovery", DISCOVERY_WINDOW_MS)]
            return []
        if name == "snapshot_timeout":
            if self.state == "syncing":
                self.snapshot_pending_from = None
                return self._request_snapshot(now_ms)
            return []
        if name == "anti_entropy":
            return self.anti_entropy_tick(now_ms)
        if name == "flush":
            self.flush_armed = False
            return self._flush_transforms(now_ms)
        return []

    def anti_entropy_tick(self, now_ms: float) -> list[Action]:
        self.pull_inflight.clear()
        digest = SyncMessage(
            kind=MsgKind.DIGEST, sender=self.id,
            digest=self.replica.digest(), max_lamport=self.replica.max_lamport(),
        )
        actions = self._broadcast_reliable(digest)
        actions.append(self._timer("anti_entropy", ANTI_ENTROPY_MS))
        return actions

    # -- local commands ---------------------------------------------------------

    def local_load_specimen(
        self,
        specimen_id: str,
        kind: str,
        source_hash: str,
        source_origin: str,
        now_ms: float,
        transform: TransformRecord | None = None,
        viz: VizRecord | None = None,
    ) -> list[Action]:
        record = make_specimen_record(
            specimen_id, kind, source_hash, source_origin,
            version=self.replica.next_version(self.id),
            transform=transform, viz=viz,
        )
        self.replica.specimens[specimen_id] = record
        msg = SyncMessage(kind=MsgKind.STATE_DELTA, sender=self.id, record=record)
        return self._broadcast_reliable(msg) + [SceneChanged()]

    def local_unload_specimen(self, specimen_id: str, now_ms: float) -> list[Action]:
        # removal is modeled as a tombstone-free delete: not replicated as
        # state, so it only makes sense for local experiments; shared scenes
        # keep specimens until the session ends
        self.replica.specimens.pop(specimen_id, None)
        return [SceneChanged()]

    def _structural_update(self, record: SpecimenRecord, kind: MsgKind) -> list[Action]:
        self.replica.specimens[record.specimen_id] = record
        msg = SyncMessage(kind=kind, sender=self.id, record=record)
        return self._broadcast_reliable(msg) + [SceneChanged()]

    def local_set_viz(self, specimen_id: str, viz: VizRecord, now_ms: float) -> list[Action]:
        current = self.replica.specimens.get(specimen_id)
        if current is None:
            raise KeyError(specimen_id)
        record = bump_record(current, self.replica.next_version(self.id), viz=viz)
        return self._structural_update(record, MsgKind.STATE_DELTA)

    def local_grab(self, specimen_id: str, now_ms: float) -> list[Action]:
        current = self.replica.specimens.get(specimen_id)
        if current is None:
            raise KeyError(specimen_id)
        record = bump_record(current, self.replica.next_version(self.id), owner=self.id)
        return self._structural_update(record, MsgKind.GRAB)

    def local_release(self, specimen_id: str, now_ms: float) -> list[Action]:
        current = self.replica.specimens.get(specimen_id)
        if current is None:
            raise KeyError(specimen_id)
        record = bump_record(current, self.replica.next_version(self.id), owner="")
        return self._structural_update(record, MsgKind.RELEASE)

    def local_set_transform(
        self, specimen_id: str, transform: TransformRecord, now_ms: float
    ) -> list[Action]:
        current = self.replica.specimens.get(specimen_id)
        if current is None:
            raise KeyError(specimen_id)
        record = bump_record(current, self.replica.next_version(self.id), transform=transform)
        self.replica.specimens[specimen_id] = record
        return self._queue_transform(specimen_id, ("specimen", record), now_ms) + [SceneChanged()]

    def local_set_pose(self, pose: PoseRecord, now_ms: float) -> list[Action]:
        self.replica.peers[self.id].pose = pose
        return self._queue_transform("@pose", ("pose", pose), now_ms)

    def local_leave(self, now_ms: float) -> list[Action]:
        msg = SyncMessage(kind=MsgKind.LEAVE, sender=self.id)
        actions = self._broadcast_reliable(msg)
        actions.extend(ClosePeer(p) for p in sorted(self.connected))
        self.state = "left"
        return actions

    # -- transform coalescing -----------------------------------------------

    def _queue_transform(self, key: str, entry: tuple[str, object], now_ms: float) -> list[Action]:
        last = self.last_transform_send.get(key)
        if last is None or now_ms - last >= TRANSFORM_FLUSH_MS:
            self.last_transform_send[key] = now_ms
            return self._send_transform(entry)
        self.pending_transforms[key] = entry  # latest state wins
        if not self.flush_armed:
            self.flush_armed = True
            delay = max(1, int(TRANSFORM_FLUSH_MS - (now_ms - last)))
            return [self._timer("flush", delay)]
        return []

    def _send_transform(self, entry: tuple[str, object]) -> list[Action]:
        target_kind, payload = entry
        self.seq += 1
        if target_kind == "pose":
            msg = SyncMessage(
                kind=MsgKind.TRANSFORM_UPDATE, sender=self.id, seq=self.seq, pose=payload
            )
        else:
            msg = SyncMessage(
                kind=MsgKind.TRANSFORM_UPDATE, sender=self.id, seq=self.seq, record=payload
            )
        data = encode_message(msg)
        return [SendUnreliable(p, data) for p in sorted(self.connected)]

    def _flush_transforms(self, now_ms: float) -> list[Action]:
        actions: list[Action] = []
        pending, self.pending_transforms = self.pending_transforms, {}
        for key, entry in pending.items():
            self.last_transform_send[key] = now_ms
            actions.extend(self._send_transform(entry))
        return actions
