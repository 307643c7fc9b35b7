"""Binary encoding of peer-channel messages (see protocol.md).

Little-endian throughout, version byte first. All float fields are f32 on
the wire; decoded records therefore hold exactly the values every other
replica holds, which is what makes digest comparison meaningful. Writers
must apply their own encoded messages rather than their pre-encoding state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from ..errors import ProtocolError

WIRE_VERSION = 1

QUALITY_CODES = {"low": 0, "medium": 1, "high": 2}
QUALITY_NAMES = {v: k for k, v in QUALITY_CODES.items()}
SPECIMEN_KINDS = {"volume": 0, "mesh": 1}
SPECIMEN_KIND_NAMES = {v: k for k, v in SPECIMEN_KINDS.items()}


class MsgKind(IntEnum):
    HELLO = 1
    OFFER = 2
    ANSWER = 3
    STATE_DELTA = 4
    TRANSFORM_UPDATE = 5
    SNAPSHOT_REQUEST = 6
    SNAPSHOT = 7
    DIGEST = 8
    GRAB = 9
    RELEASE = 10
    LEAVE = 11


def _f32(x: float) -> float:
    """Round to the nearest f32 so in-memory state matches the wire."""
    return struct.unpack("<f", struct.pack("<f", x))[0]


@dataclass(frozen=True)
class TransformRecord:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)  # x y z w
    scale: float = 1.0

    def __post_init__(self) -> None:
        q = self.orientation
        norm = sum(c * c for c in q) ** 0.5
        if norm < 1e-9:
            raise ValueError("zero quaternion")
        q = tuple(_f32(c / norm) for c in q)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "position", tuple(_f32(c) for c in self.position))
        object.__setattr__(self, "orientation", q)
        object.__setattr__(self, "scale", _f32(self.scale))


@dataclass(frozen=True)
class VizRecord:
    lut_name: str = "grayscale"
    opacity: float = 1.0
    quality: str = "medium"
    planes: tuple[tuple[float, float, float, float, bool], ...] = ()
    material: str = "default_gray"

    def __post_init__(self) -> None:
        if self.quality not in QUALITY_CODES:
            raise ValueError(f"bad quality {self.quality!r}")
        object.__setattr__(self, "opacity", _f32(min(max(self.opacity, 0.0), 1.0)))
        object.__setattr__(
            self,
            "planes",
            tuple(
                (_f32(nx), _f32(ny), _f32(nz), _f32(off), bool(en))
                for nx, ny, nz, off, en in self.planes
            ),
        )


@dataclass(frozen=True)
class PoseRecord:
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(_f32(c) for c in self.position))
        object.__setattr__(self, "orientation", tuple(_f32(c) for c in self.orientation))


@dataclass(frozen=True)
class SpecimenRecord:
    specimen_id: str
    kind: str  # volume | mesh
    source_hash: str
    source_origin: str
    transform: TransformRecord = field(default_factory=TransformRecord)
    viz: VizRecord = field(default_factory=VizRecord)
    owner: str = ""  # peer id or empty
    lamport: int = 0
    writer: str = "0" * 32

    def __post_init__(self) -> None:
        if self.kind not in SPECIMEN_KINDS:
            raise ValueError(f"bad specimen kind {self.kind!r}")


@dataclass(frozen=True)
class SyncMessage:
    kind: MsgKind
    sender: str  # 32 hex chars
    seq: int = 0
    # payload variants, exactly one set depending on kind
    peer_endpoint: str = ""
    peer_name: str = ""
    record: SpecimenRecord | None = None
    pose: PoseRecord | None = None
    records: tuple[SpecimenRecord, ...] = ()
    lamport_clock: int = 0
    digest: bytes = b""
    max_lamport: int = 0


# --- low-level helpers ------------------------------------------------------

def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ProtocolError("string field too long")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise ProtocolError("message truncated")
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def hex16(self) -> str:
        return self.take(16).hex()

    def done(self) -> bool:
        return self.off == len(self.data)


def _pack_hex16(peer_id: str) -> bytes:
    try:
        raw = bytes.fromhex(peer_id)
    except ValueError as exc:
        raise ProtocolError(f"peer id not hex: {peer_id!r}") from exc
    if len(raw) != 16:
        raise ProtocolError("peer id must be 128 bits")
    return raw


# --- specimen record --------------------------------------------------------

def encode_specimen_record(rec: SpecimenRecord) -> bytes:
    out = bytearray()
    out += _pack_str(rec.specimen_id)
    out += struct.pack("<B", SPECIMEN_KINDS[rec.kind])
    out += _pack_str(rec.source_hash)
    out += _pack_str(rec.source_origin)
    t = rec.transform
    out += struct.pack("<3f", *t.position)
    out += struct.pack("<4f", *t.orientation)
    out += struct.pack("<f", t.scale)
    v = rec.viz
    out += _pack_str(v.lut_name)
    out += struct.pack("<f", v.opacity)
    out += struct.pack("<B", QUALITY_CODES[v.quality])
    out += struct.pack("<B", len(v.planes))
    for nx, ny, nz, off, enabled in v.planes:
        out += struct.pack("<4fB", nx, ny, nz, off, 1 if enabled else 0)
    out += _pack_str(v.material)
    if rec.owner:
        out += struct.pack("<B", 1) + _pack_hex16(rec.owner)
    else:
        out += struct.pack("<B", 0)
    out += struct.pack("<Q", rec.lamport)
    out += _pack_hex16(rec.writer)
    return bytes(out)


def decode_specimen_record(r: _Reader) -> SpecimenRecord:
    specimen_id = r.string()
    kind = SPECIMEN_KIND_NAMES.get(r.u8())
    if kind is None:
        raise ProtocolError("unknown specimen kind code")
    source_hash = r.string()
    source_origin = r.string()
    position = (r.f32(), r.f32(), r.f32())
    orientation = (r.f32(), r.f32(), r.f32(), r.f32())
    scale = r.f32()
    lut_name = r.string()
    opacity = r.f32()
    quality = QUALITY_NAMES.get(r.u8())
    if quality is None:
        raise ProtocolError("unknown quality code")
    planes = tuple(
        (r.f32(), r.f32(), r.f32(), r.f32(), r.u8() != 0) for _ in range(r.u8())
    )
    material = r.string()
    owner = r.hex16() if r.u8() else ""
    lamport = r.u64()
    writer = r.hex16()
    return SpecimenRecord(
        specimen_id=specimen_id,
        kind=kind,
        source_hash=source_hash,
        source_origin=source_origin,
        transform=TransformRecord(position=position, orientation=orientation, scale=scale),
        viz=VizRecord(
            lut_name=lut_name, opacity=opacity, quality=quality, planes=planes,
            material=material,
        ),
        owner=owner,
        lamport=lamport,
        writer=writer,
    )


# --- messages ---------------------------------------------------------------

def encode_message(msg: SyncMessage) -> bytes:
    body = bytearray()
    body += struct.pack("<B", WIRE_VERSION)
    body += struct.pack("<B", msg.kind)
    body += _pack_hex16(msg.sender)
    body += struct.pack("<Q", msg.seq)
    if msg.kind in (MsgKind.HELLO, MsgKind.OFFER, MsgKind.ANSWER):
        body += _pack_str(msg.peer_endpoint)
        body += _pack_str(msg.peer_name)
    elif msg.kind in (MsgKind.STATE_DELTA, MsgKind.GRAB, MsgKind.RELEASE):
        assert msg.record is not None
        body += encode_specimen_record(msg.record)
    elif msg.kind == MsgKind.TRANSFORM_UPDATE:
        if msg.pose is not None:
            body += struct.pack("<B", 1)
            body += struct.pack("<3f", *msg.pose.position)
            body += struct.pack("<4f", *msg.pose.orientation)
        else:
            assert msg.record is not None
            body += struct.pack("<B", 0)
            body += encode_specimen_record(msg.record)
    elif msg.kind in (MsgKind.SNAPSHOT_REQUEST, MsgKind.SNAPSHOT):
        body += struct.pack("<I", len(msg.records))
        for rec in msg.records:
            body += encode_specimen_record(rec)
        body += struct.pack("<Q", msg.lamport_clock)
    elif msg.kind == MsgKind.DIGEST:
        if len(msg.digest) != 32:
            raise ProtocolError("digest must be 32 bytes")
        body += msg.digest
        body += struct.pack("<Q", msg.max_lamport)
    elif msg.kind == MsgKind.LEAVE:
        pass
    else:
        raise ProtocolError(f"cannot encode kind {msg.kind}")
    return bytes(body)


def decode_message(data: bytes) -> SyncMessage:
    r = _Reader(data)
    version = r.u8()
    if version != WIRE_VERSION:
        raise ProtocolError(f"unsupported wire version {version}")
    try:
        kind = MsgKind(r.u8())
    except ValueError as exc:
        raise ProtocolError(f"unknown message kind: {exc}") from exc
    sender = r.hex16()
    seq = r.u64()
    if kind in (MsgKind.HELLO, MsgKind.OFFER, MsgKind.ANSWER):
        endpoint = r.string()
        name = r.string()
        return SyncMessage(kind=kind, sender=sender, seq=seq, peer_endpoint=endpoint, peer_name=name)
    if kind in (MsgKind.STATE_DELTA, MsgKind.GRAB, MsgKind.RELEASE):
        return SyncMessage(kind=kind, sender=sender, seq=seq, record=decode_specimen_record(r))
    if kind == MsgKind.TRANSFORM_UPDATE:
        if r.u8() == 1:
            pose = PoseRecord(
                position=(r.f32(), r.f32(), r.f32()),
                orientation=(r.f32(), r.f32(), r.f32(), r.f32()),
            )
            return SyncMessage(kind=kind, sender=sender, seq=seq, pose=pose)
        return SyncMessage(kind=kind, sender=sender, seq=seq, record=decode_specimen_record(r))
    if kind in (MsgKind.SNAPSHOT_REQUEST, MsgKind.SNAPSHOT):
        count = r.u32()
        records = tuple(decode_specimen_record(r) for _ in range(count))
        clock = r.u64()
        return SyncMessage(kind=kind, sender=sender, seq=seq, records=records, lamport_clock=clock)
    if kind == MsgKind.DIGEST:
        digest = r.take(32)
        max_lamport = r.u64()
        return SyncMessage(kind=kind, sender=sender, seq=seq, digest=digest, max_lamport=max_lamport)
    if kind == MsgKind.LEAVE:
        return SyncMessage(kind=kind, sender=sender, seq=seq)
    raise ProtocolError(f"cannot decode kind {kind}")
