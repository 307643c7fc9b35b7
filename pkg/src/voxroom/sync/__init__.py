from .node import (
    ANTI_ENTROPY_MS,
    BrokerSend,
    ClosePeer,
    DialPeer,
    JoinFailed,
    PeersChanged,
    SceneChanged,
    SendReliable,
    SendUnreliable,
    SessionNode,
    SetTimer,
)
from .state import PeerInfo, PeerPresence, SceneReplica, make_specimen_record, new_peer_id
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

__all__ = [
    "ANTI_ENTROPY_MS",
    "BrokerSend",
    "ClosePeer",
    "DialPeer",
    "JoinFailed",
    "MsgKind",
    "PeerInfo",
    "PeerPresence",
    "PeersChanged",
    "PoseRecord",
    "SceneChanged",
    "SceneReplica",
    "SendReliable",
    "SendUnreliable",
    "SessionNode",
    "SetTimer",
    "SpecimenRecord",
    "SyncMessage",
    "TransformRecord",
    "VizRecord",
    "decode_message",
    "encode_message",
    "make_specimen_record",
    "new_peer_id",
]
