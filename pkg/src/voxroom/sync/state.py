"""Replicated scene state with last-writer-wins convergence.

Every write (structural or transform) carries the full specimen record
stamped with a (lamport, writer) version, so a version uniquely identifies
record content and replicas holding equal version sets are bit-equal. The
scene digest is a hash over the sorted record encodings, which makes digest
equality equivalent to state equality and independent of insertion order.
"""

from __future__ import annotations

import hashlib
import uuid
from dataclasses import dataclass, field, replace

from .wire import (
    PoseRecord,
    SpecimenRecord,
    TransformRecord,
    VizRecord,
    encode_specimen_record,
)


def new_peer_id() -> str:
    return uuid.uuid4().hex


@dataclass(frozen=True)
class PeerInfo:
    peer_id: str  # 32 hex chars (128-bit)
    endpoint: str  # host:port the peer accepts channels on
    display_name: str = ""

    def __post_init__(self) -> None:
        if len(self.peer_id) != 32:
            raise ValueError(f"peer_id must be 32 hex chars, got {self.peer_id!r}")
        if not self.endpoint:
            raise ValueError("endpoint must be nonempty")


@dataclass
class PeerPresence:
    info: PeerInfo
    pose: PoseRecord | None = None
    connected: bool = False


@dataclass
class SceneReplica:
    """One node's view of the shared scene."""

    specimens: dict[str, SpecimenRecord] = field(default_factory=dict)
    peers: dict[str, PeerPresence] = field(default_factory=dict)
    lamport_clock: int = 0
    last_transform_seq: dict[tuple[str, str], int] = field(default_factory=dict)
    ignored_transforms: int = 0  # datagrams for unknown specimens (metric)

    def copy(self) -> "SceneReplica":
        twin = SceneReplica(
            specimens=dict(self.specimens),
            peers={},
            lamport_clock=self.lamport_clock,
            last_transform_seq=dict(self.last_transform_seq),
            ignored_transforms=self.ignored_transforms,
        )
        return twin

    # -- versions ----------------------------------------------------------

    def max_lamport(self) -> int:
        if not self.specimens:
            return 0
        return max(rec.lamport for rec in self.specimens.values())

    def digest(self) -> bytes:
        h = hashlib.sha256()
        for sid in sorted(self.specimens):
            h.update(encode_specimen_record(self.specimens[sid]))
        return h.digest()

    # -- applying records --------------------------------------------------

    def apply_record(self, record: SpecimenRecord) -> bool:
        """LWW merge of a full specimen record; True when it won."""
        current = self.specimens.get(record.specimen_id)
        if current is not None and (record.lamport, record.writer) <= (
            current.lamport,
            current.writer,
        ):
            return False
        self.specimens[record.specimen_id] = record
        self.lamport_clock = max(self.lamport_clock, record.lamport) + 1
        return True

    def apply_transform_record(self, sender: str, seq: int, record: SpecimenRecord) -> bool:
        """Unreliable-stream variant: drops stale datagrams per (sender,
        specimen) and never creates specimens it has not seen load."""
        key = (sender, record.specimen_id)
        if seq <= self.last_transform_seq.get(key, -1):
            return False
        self.last_transform_seq[key] = seq
        if record.specimen_id not in self.specimens:
            self.ignored_transforms += 1
            return False
        return self.apply_record(record)

    def apply_pose(self, sender: str, seq: int, pose: PoseRecord) -> bool:
        key = (sender, "@pose")
        if seq <= self.last_transform_seq.get(key, -1):
            return False
        self.last_transform_seq[key] = seq
        presence = self.peers.get(sender)
        if presence is None:
            return False
        presence.pose = pose
        return True

    def next_version(self, writer: str) -> tuple[int, str]:
        self.lamport_clock += 1
        return (self.lamport_clock, writer)


def make_specimen_record(
    specimen_id: str,
    kind: str,
    source_hash: str,
    source_origin: str,
    *,
    version: tuple[int, str],
    transform: TransformRecord | None = None,
    viz: VizRecord | None = None,
    owner: str = "",
) -> SpecimenRecord:
    lamport, writer = version
    return SpecimenRecord(
        specimen_id=specimen_id,
        kind=kind,
        source_hash=source_hash,
        source_origin=source_origin,
        transform=transform if transform is not None else TransformRecord(),
        viz=viz if viz is not None else VizRecord(),
        owner=owner,
        lamport=lamport,
        writer=writer,
    )


def bump_record(record: SpecimenRecord, version: tuple[int, str], **changes) -> SpecimenRecord:
    lamport, writer = version
    return replace(record, lamport=lamport, writer=writer, **changes)
