"""OpenFlow 1.0 data model: dataclasses for the messages perfbench exercises.

Numeric constants follow the OpenFlow 1.0.0 specification. Only the
message set the benchmark drives is modelled: HELLO, ECHO, FEATURES,
PACKET_IN, PACKET_OUT and port statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Union

OFP_VERSION = 0x01
OFP_HEADER_SIZE = 8
OFP_MAX_LENGTH = 0xFFFF

# Buffer id meaning "packet bytes are carried in the message"
NO_BUFFER = 0xFFFFFFFF


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------

class MsgType(IntEnum):
    HELLO = 0
    ERROR = 1
    ECHO_REQUEST = 2
    ECHO_REPLY = 3
    VENDOR = 4
    FEATURES_REQUEST = 5
    FEATURES_REPLY = 6
    PACKET_IN = 10
    PACKET_OUT = 13
    FLOW_MOD = 14
    STATS_REQUEST = 16
    STATS_REPLY = 17
    BARRIER_REQUEST = 18


class StatsType(IntEnum):
    DESC = 0
    FLOW = 1
    AGGREGATE = 2
    TABLE = 3
    PORT = 4


class Port(IntEnum):
    MAX = 0xFF00
    IN_PORT = 0xFFF8
    TABLE = 0xFFF9
    NORMAL = 0xFFFA
    FLOOD = 0xFFFB
    ALL = 0xFFFC
    CONTROLLER = 0xFFFD
    LOCAL = 0xFFFE
    NONE = 0xFFFF


class PacketInReason(IntEnum):
    NO_MATCH = 0
    ACTION = 1


class ActionType(IntEnum):
    OUTPUT = 0


# ---------------------------------------------------------------------------
# Header
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OfHeader:
    version: int
    msg_type: int
    length: int
    xid: int


# ---------------------------------------------------------------------------
# Bodies
# ---------------------------------------------------------------------------

@dataclass
class Hello:
    pass


@dataclass
class EchoRequest:
    payload: bytes = b""


@dataclass
class EchoReply:
    payload: bytes = b""


@dataclass
class FeaturesRequest:
    pass


@dataclass
class FeaturesReply:
    datapath_id: int
    n_buffers: int = 0
    n_tables: int = 1
    capabilities: int = 0
    actions: int = 1 << ActionType.OUTPUT
    ports: bytes = b""  # raw ofp_phy_port array, 48 bytes each


@dataclass
class PacketIn:
    buffer_id: int
    total_len: int
    in_port: int
    reason: int
    data: bytes = b""


@dataclass
class ActionOutput:
    port: int
    max_len: int = 0


@dataclass
class RawAction:
    """Any action other than OUTPUT, kept opaque."""
    type: int
    payload: bytes = b""


Action = Union[ActionOutput, RawAction]


@dataclass
class PacketOut:
    buffer_id: int
    in_port: int
    actions: list[Action] = field(default_factory=list)
    data: bytes = b""


@dataclass
class PortStatsRequest:
    port_no: int = Port.NONE
    flags: int = 0


@dataclass
class PortStats:
    port_no: int
    rx_packets: int = 0
    tx_packets: int = 0
    rx_bytes: int = 0
    tx_bytes: int = 0
    rx_dropped: int = 0
    tx_dropped: int = 0
    rx_errors: int = 0
    tx_errors: int = 0
    rx_frame_err: int = 0
    rx_over_err: int = 0
    rx_crc_err: int = 0
    collisions: int = 0


@dataclass
class PortStatsReply:
    stats: list[PortStats] = field(default_factory=list)
    flags: int = 0


Body = Union[
    Hello,
    EchoRequest,
    EchoReply,
    FeaturesRequest,
    FeaturesReply,
    PacketIn,
    PacketOut,
    PortStatsRequest,
    PortStatsReply,
]

BODY_TYPES: dict[type, MsgType] = {
    Hello: MsgType.HELLO,
    EchoRequest: MsgType.ECHO_REQUEST,
    EchoReply: MsgType.ECHO_REPLY,
    FeaturesRequest: MsgType.FEATURES_REQUEST,
    FeaturesReply: MsgType.FEATURES_REPLY,
    PacketIn: MsgType.PACKET_IN,
    PacketOut: MsgType.PACKET_OUT,
    PortStatsRequest: MsgType.STATS_REQUEST,
    PortStatsReply: MsgType.STATS_REPLY,
}


# ---------------------------------------------------------------------------
# Message
# ---------------------------------------------------------------------------

@dataclass
class OfMessage:
    """A decoded OpenFlow message.

    The header is derived from the body, so the body variant is always
    consistent with the message type.
    """

    body: Body
    xid: int = 0

    @property
    def msg_type(self) -> MsgType:
        return BODY_TYPES[type(self.body)]

    @property
    def header(self) -> OfHeader:
        from .codec import encoded_length

        return OfHeader(OFP_VERSION, self.msg_type, encoded_length(self.body), self.xid)
