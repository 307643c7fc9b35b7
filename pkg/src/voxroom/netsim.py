"""Deterministic virtual-time network harness for protocol tests.

Hosts a broker core plus N session nodes on simulated links with seeded
loss, latency, duplication and reordering. No wall-clock sleeps anywhere:
identical (config, script) pairs replay to identical traces, which makes
convergence experiments reproducible enough to assert on in CI.

Reliable channels model a retrying transport: delivery is guaranteed and
ordered, only delayed. Unreliable channels honor the loss/dup/reorder
knobs. Per-link RNG streams are derived independently from the master
seed, so adding a node never perturbs the randomness other links see.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Callable

from .broker import BrokerCore, FrameDecoder, PacketKind, Send as BrokerSendAction
from .errors import ScenarioError
from .sync import (
    BrokerSend,
    ClosePeer,
    DialPeer,
    JoinFailed,
    PeerInfo,
    SendReliable,
    SendUnreliable,
    SessionNode,
    SetTimer,
    TransformRecord,
    VizRecord,
)

FIFO_EPSILON = 0.001


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    loss_rate: float = 0.0
    latency_min_ms: float = 1.0
    latency_max_ms: float = 1.0
    duplicate_rate: float = 0.0
    reorder: bool = False
    duration_ms: float = 10_000.0

    def __post_init__(self) -> None:
        for rate in (self.loss_rate, self.duplicate_rate):
            if not (0.0 <= rate <= 1.0):
                raise ValueError(f"rates must be in [0, 1], got {rate}")
        if self.latency_min_ms > self.latency_max_ms:
            raise ValueError("latency_min_ms must be <= latency_max_ms")

    @classmethod
    def from_json(cls, text: str) -> tuple["SimConfig", list[str], list[dict]]:
        obj = json.loads(text)
        lat = obj.get("latency_ms", [1, 1])
        config = cls(
            seed=int(obj.get("seed", 0)),
            loss_rate=float(obj.get("loss_rate", 0.0)),
            latency_min_ms=float(lat[0]),
            latency_max_ms=float(lat[1]),
            duplicate_rate=float(obj.get("duplicate_rate", 0.0)),
            reorder=bool(obj.get("reorder", False)),
            duration_ms=float(obj.get("duration_ms", 10_000.0)),
        )
        return config, list(obj.get("nodes", [])), list(obj.get("script", []))


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0
        self.now = 0.0

    def schedule(self, at: float, fn: Callable[[], None]) -> None:
        if at < self.now:
            raise AssertionError(f"event scheduled in the past: {at} < {self.now}")
        heapq.heappush(self._heap, (at, self._seq, fn))
        self._seq += 1

    def run_until(self, t_end: float) -> None:
        while self._heap and self._heap[0][0] <= t_end:
            at, _, fn = heapq.heappop(self._heap)
            self.now = at
            fn()
        self.now = max(self.now, t_end)


class UnreliableLink:
    """Directed lossy link with independent RNG stream."""

    def __init__(self, queue: EventQueue, config: SimConfig, label: str):
        self.queue = queue
        self.config = config
        self.rng = random.Random(f"{config.seed}/{label}")
        self.last_arrival = 0.0
        self.sent = 0
        self.delivered = 0

    def send(self, deliver: Callable[[], None], on_drop: Callable[[], None] | None = None) -> None:
        self.sent += 1
        copies = 0
        if self.rng.random() >= self.config.loss_rate:
            copies += 1
        if self.config.duplicate_rate and self.rng.random() < self.config.duplicate_rate:
            copies += 1
        if copies == 0 and on_drop is not None:
            on_drop()
        for _ in range(copies):
            latency = self.rng.uniform(self.config.latency_min_ms, self.config.latency_max_ms)
            arrival = self.queue.now + latency
            if not self.config.reorder:
                arrival = max(arrival, self.last_arrival + FIFO_EPSILON)
                self.last_arrival = arrival
            self.delivered += 1
            self.queue.schedule(arrival, deliver)


class ReliableLink:
    """Ordered, guaranteed delivery; latency only (models a retrying stream)."""

    def __init__(self, queue: EventQueue, config: SimConfig, label: str):
        self.queue = queue
        self.config = config
        self.rng = random.Random(f"{config.seed}/{label}/r")
        self.last_arrival = 0.0

    def send(self, deliver: Callable[[], None]) -> None:
        latency = self.rng.uniform(self.config.latency_min_ms, self.config.latency_max_ms)
        arrival = max(self.queue.now + latency, self.last_arrival + FIFO_EPSILON)
        self.last_arrival = arrival
        self.queue.schedule(arrival, deliver)


@dataclass
class _NodeHost:
    name: str
    node: SessionNode
    broker_conn_id: int
    broker_decoder: FrameDecoder = field(default_factory=FrameDecoder)
    joined: bool = False
    join_failed: str | None = None


class SimNet:
    """The harness: broker + nodes + links + trace, all on virtual time."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.queue = EventQueue()
        self.broker = BrokerCore()
        self.broker_alive = True
        self.hosts: dict[str, _NodeHost] = {}
        self._by_endpoint: dict[str, str] = {}
        self._by_peer_id: dict[str, str] = {}
        self._next_conn = 0
        self._id_rng = random.Random(f"{config.seed}/ids")
        self.channel_pairs: set[frozenset[str]] = set()
        self._reliable: dict[tuple[str, str], ReliableLink] = {}
        self._unreliable: dict[tuple[str, str], UnreliableLink] = {}
        self._broker_links: dict[tuple[str, str], ReliableLink] = {}
        self.trace: list[dict] = []

    # -- plumbing ------------------------------------------------------------

    @property
    def now(self) -> float:
        return self.queue.now

    def record(self, kind: str, **fields) -> None:
        entry = {"t": round(self.queue.now, 3), "ev": kind}
        entry.update(fields)
        self.trace.append(entry)

    def trace_hash(self) -> str:
        h = hashlib.sha256()
        for entry in self.trace:
            h.update(json.dumps(entry, sort_keys=True).encode())
        return h.hexdigest()

    def trace_jsonl(self) -> str:
        return "\n".join(json.dumps(entry, sort_keys=True) for entry in self.trace) + "\n"

    def add_node(self, name: str, display_name: str = "") -> SessionNode:
        peer_id = f"{self._id_rng.getrandbits(128):032x}"
        endpoint = f"sim://{name}"
        info = PeerInfo(peer_id=peer_id, endpoint=endpoint, display_name=display_name or name)
        node = SessionNode("sim-room", info)
        host = _NodeHost(name=name, node=node, broker_conn_id=self._next_conn)
        self._next_conn += 1
        self.hosts[name] = host
        self._by_endpoint[endpoint] = name
        self._by_peer_id[peer_id] = name
        return node

    def host_of_peer(self, peer_id: str) -> _NodeHost | None:
        name = self._by_peer_id.get(peer_id)
        return self.hosts.get(name) if name else None

    def _link(self, table, cls, a: str, b: str, tag: str):
        key = (a, b)
        if key not in table:
            table[key] = cls(self.queue, self.config, f"{tag}:{a}->{b}")
        return table[key]

    # -- action interpretation -------------------------------------------------

    def apply_actions(self, host: _NodeHost, actions: list) -> None:
        for action in actions:
            if isinstance(action, BrokerSend):
                self._to_broker(host, action.data)
            elif isinstance(action, SetTimer):
                name, token = action.name, action.token
                self.queue.schedule(
                    self.queue.now + action.delay_ms,
                    lambda h=host, n=name, tk=token: self.apply_actions(
                        h, h.node.on_timer(n, tk, self.queue.now)
                    ),
                )
            elif isinstance(action, DialPeer):
                self._dial(host, action.peer_id, action.endpoint)
            elif isinstance(action, SendReliable):
                self._channel_send(host, action.peer_id, action.data, reliable=True)
            elif isinstance(action, SendUnreliable):
                self._channel_send(host, action.peer_id, action.data, reliable=False)
            elif isinstance(action, ClosePeer):
                target = self.host_of_peer(action.peer_id)
                if target is not None:
                    pair = frozenset((host.name, target.name))
                    self.channel_pairs.discard(pair)
            elif isinstance(action, JoinFailed):
                host.join_failed = action.reason
                self.record("join_failed", node=host.name, reason=action.reason)
            # SceneChanged / PeersChanged are UI notifications; ignored here

    def _to_broker(self, host: _NodeHost, data: bytes) -> None:
        if not self.broker_alive:
            return
        link = self._link(self._broker_links, ReliableLink, host.name, "broker", "b")
        conn = host.broker_conn_id

        def deliver() -> None:
            if not self.broker_alive:
                return
            for out in self.broker.data_received(conn, data):
                if isinstance(out, BrokerSendAction):
                    self._from_broker(out.conn_id, out.data)
        link.send(deliver)

    def _from_broker(self, conn_id: int, data: bytes) -> None:
        target = next((h for h in self.hosts.values() if h.broker_conn_id == conn_id), None)
        if target is None:
            return
        link = self._link(self._broker_links, ReliableLink, "broker", target.name, "b")

        def deliver() -> None:
            for packet in target.broker_decoder.feed(data):
                if packet.kind == PacketKind.CONNACK:
                    self.apply_actions(target, target.node.on_broker_connack(self.queue.now))
                elif packet.kind == PacketKind.PUBLISH:
                    self.apply_actions(
                        target,
                        target.node.on_broker_publish(packet.topic, packet.payload, self.queue.now),
                    )
        link.send(deliver)

    def _dial(self, host: _NodeHost, peer_id: str, endpoint: str) -> None:
        target_name = self._by_endpoint.get(endpoint)
        if target_name is None:
            return
        target = self.hosts[target_name]
        pair = frozenset((host.name, target_name))
        if pair in self.channel_pairs:
            # pair already linked; just confirm the dialer's side
            self.queue.schedule(
                self.queue.now,
                lambda: self.apply_actions(
                    host, host.node.on_channel_open(target.node.id, self.queue.now)
                ),
            )
            return
        self.channel_pairs.add(pair)
        self.record("channel_pair", a=min(host.name, target_name), b=max(host.name, target_name))
        link = self._link(self._reliable, ReliableLink, host.name, target_name, "dial")

        def established() -> None:
            self.apply_actions(host, host.node.on_channel_open(target.node.id, self.queue.now))
            self.apply_actions(target, target.node.on_channel_open(host.node.id, self.queue.now))
        link.send(established)

    def _channel_send(self, host: _NodeHost, peer_id: str, data: bytes, *, reliable: bool) -> None:
        target = self.host_of_peer(peer_id)
        if target is None or frozenset((host.name, target.name)) not in self.channel_pairs:
            return
        sender_peer = host.node.id
        size = len(data)

        def deliver() -> None:
            self.record("rx", src=host.name, dst=target.name, n=size, rel=int(reliable))
            self.apply_actions(
                target, target.node.on_channel_data(sender_peer, data, self.queue.now)
            )

        if reliable:
            self._link(self._reliable, ReliableLink, host.name, target.name, "rel").send(deliver)
        else:
            link = self._link(self._unreliable, UnreliableLink, host.name, target.name, "unr")
            link.send(
                deliver,
                on_drop=lambda: self.record("drop", src=host.name, dst=target.name, n=size),
            )

    # -- scripted operations -----------------------------------------------------

    def join(self, name: str, at_ms: float) -> None:
        host = self.hosts[name]

        def go() -> None:
            if self.broker_alive:
                self.broker.connection_opened(host.broker_conn_id)
            self.record("join", node=name)
            host.joined = True
            self.apply_actions(host, host.node.start(self.queue.now))
        self.queue.schedule(at_ms, go)

    def kill_broker(self, at_ms: float) -> None:
        def go() -> None:
            self.broker_alive = False
            self.record("broker_killed")
            for host in self.hosts.values():
                if host.joined:
                    self.apply_actions(host, host.node.on_broker_down(self.queue.now))
        self.queue.schedule(at_ms, go)

    def run(self, until_ms: float | None = None) -> None:
        self.queue.run_until(self.config.duration_ms if until_ms is None else until_ms)


# --- scenario scripts ----------------------------------------------------------


def run_scenario(config: SimConfig, node_names: list[str], script: list[dict]) -> SimNet:
    """Execute a declarative script; raises ScenarioError on unknown refs.

    Script entries: {"at": ms, "node": name, "op": ...} with ops join, load,
    set_viz, transform, grab, release, leave, kill_broker.
    """
    sim = SimNet(config)
    for name in node_names:
        sim.add_node(name)

    def node_host(entry) -> _NodeHost:
        name = entry.get("node")
        if name not in sim.hosts:
            raise ScenarioError(f"script references unknown node {name!r}")
        return sim.hosts[name]

    for entry in script:
        at = float(entry.get("at", 0.0))
        op = entry.get("op")
        if op == "join":
            node_host(entry)
            sim.join(entry["node"], at)
        elif op == "kill_broker":
            sim.kill_broker(at)
        elif op in ("load", "set_viz", "transform", "grab", "release", "leave"):
            host = node_host(entry)
            sim.queue.schedule(at, _scripted_write(sim, host, dict(entry)))
        else:
            raise ScenarioError(f"unknown op {op!r}")

    sim.run()
    return sim


def _scripted_write(sim: SimNet, host: _NodeHost, entry: dict) -> Callable[[], None]:
    def go() -> None:
        node = host.node
        op = entry["op"]
        sid = entry.get("specimen", "specimen")
        try:
            if op == "load":
                actions = node.local_load_specimen(
                    sid, entry.get("kind", "volume"),
                    entry.get("hash", f"hash:{sid}"), entry.get("origin", f"sim:{sid}"),
                    sim.now,
                )
            elif op == "set_viz":
                viz = VizRecord(
                    lut_name=entry.get("lut", "grayscale"),
                    opacity=float(entry.get("opacity", 1.0)),
                    quality=entry.get("quality", "medium"),
                )
                actions = node.local_set_viz(sid, viz, sim.now)
            elif op == "transform":
                pos = entry.get("pos", [0.0, 0.0, 0.0])
                actions = node.local_set_transform(
                    sid, TransformRecord(position=tuple(float(x) for x in pos)), sim.now
                )
            elif op == "grab":
                actions = node.local_grab(sid, sim.now)
            elif op == "release":
                actions = node.local_release(sid, sim.now)
            else:  # leave
                actions = node.local_leave(sim.now)
        except KeyError:
            sim.record("write_skipped", node=host.name, op=op, specimen=sid)
            return
        sim.record("write", node=host.name, op=op, specimen=sid)
        sim.apply_actions(host, actions)
    return go


def build_random_write_script(
    seed: int,
    node_names: list[str],
    n_writes: int,
    start_ms: float,
    end_ms: float,
    specimens: tuple[str, ...] = ("s0", "s1", "s2"),
) -> list[dict]:
    """Randomized mixed workload; each specimen is loaded before other ops."""
    rng = random.Random(seed)
    script: list[dict] = []
    t = start_ms
    for i, sid in enumerate(specimens):
        script.append(
            {"at": start_ms + i, "node": rng.choice(node_names), "op": "load", "specimen": sid}
        )
    span = (end_ms - start_ms - len(specimens)) / max(n_writes, 1)
    t = start_ms + len(specimens)
    for _ in range(n_writes):
        t += span * rng.uniform(0.5, 1.5)
        t = min(t, end_ms)
        op = rng.choices(["transform", "set_viz", "grab", "release"], weights=[6, 2, 1, 1])[0]
        entry = {
            "at": round(t, 3),
            "node": rng.choice(node_names),
            "op": op,
            "specimen": rng.choice(specimens),
        }
        if op == "transform":
            entry["pos"] = [round(rng.uniform(-5, 5), 3) for _ in range(3)]
        elif op == "set_viz":
            entry["opacity"] = round(rng.random(), 3)
        script.append(entry)
    return script
