"""OpenFlow 1.0 wire codec.

All multi-byte fields are big-endian (network order). Every message starts
with the 8-byte ofp_header (version, type, length, xid); ``length`` covers
the header plus body.

TCP delivers a byte stream, and with Nagle enabled several messages share a
segment, so framing is done over a growable buffer: complete messages are
consumed and the trailing partial message stays in the buffer.
"""

from __future__ import annotations

import logging
import struct
from typing import Callable

from ..errors import CodecError, MalformedBody, OversizeBody, Truncated, UnknownType
from .types import (
    NO_BUFFER,
    OFP_HEADER_SIZE,
    OFP_MAX_LENGTH,
    OFP_VERSION,
    Action,
    ActionOutput,
    ActionType,
    Body,
    EchoReply,
    EchoRequest,
    FeaturesReply,
    FeaturesRequest,
    Hello,
    MsgType,
    OfHeader,
    OfMessage,
    PacketIn,
    PacketOut,
    PortStats,
    PortStatsReply,
    PortStatsRequest,
    RawAction,
    StatsType,
)

log = logging.getLogger("perfbench")

_HEADER = struct.Struct("!BBHI")
_FEATURES_REPLY = struct.Struct("!QIB3xII")        # 24 bytes
_PACKET_IN = struct.Struct("!IHHBx")               # 10 bytes, data follows
_PACKET_OUT = struct.Struct("!IHH")                # 8 bytes, actions then data
_ACTION_HEADER = struct.Struct("!HH")
_ACTION_OUTPUT = struct.Struct("!HHHH")            # 8 bytes
_STATS_HEADER = struct.Struct("!HH")               # type, flags
_PORT_STATS_REQUEST = struct.Struct("!H6x")        # 8 bytes
_PORT_STATS = struct.Struct("!H6x12Q")             # 104 bytes

PHY_PORT_SIZE = 48

# Bytes a PacketOut adds around its packet when it carries one output action
PACKET_OUT_OVERHEAD = OFP_HEADER_SIZE + _PACKET_OUT.size + _ACTION_OUTPUT.size
PACKET_IN_OVERHEAD = OFP_HEADER_SIZE + _PACKET_IN.size


# ---------------------------------------------------------------------------
# Encode
# ---------------------------------------------------------------------------

def _encode_actions(actions: list[Action]) -> bytes:
    out = bytearray()
    for action in actions:
        if isinstance(action, ActionOutput):
            out += _ACTION_OUTPUT.pack(
                ActionType.OUTPUT, _ACTION_OUTPUT.size, action.port, action.max_len
            )
        else:
            length = _ACTION_HEADER.size + len(action.payload)
            if length % 8:
                raise MalformedBody(f"Action length {length} is not a multiple of 8")
            out += _ACTION_HEADER.pack(action.type, length) + action.payload
    return bytes(out)


def _encode_body(body: Body) -> bytes:
    if isinstance(body, (Hello, FeaturesRequest)):
        return b""
    if isinstance(body, (EchoRequest, EchoReply)):
        return bytes(body.payload)
    if isinstance(body, FeaturesReply):
        if len(body.ports) % PHY_PORT_SIZE:
            raise MalformedBody(f"Port array of {len(body.ports)} bytes")
        return _FEATURES_REPLY.pack(
            body.datapath_id, body.n_buffers, body.n_tables,
            body.capabilities, body.actions,
        ) + body.ports
    if isinstance(body, PacketIn):
        return _PACKET_IN.pack(
            body.buffer_id, body.total_len, body.in_port, body.reason
        ) + body.data
    if isinstance(body, PacketOut):
        actions = _encode_actions(body.actions)
        return _PACKET_OUT.pack(body.buffer_id, body.in_port, len(actions)) + actions + body.data
    if isinstance(body, PortStatsRequest):
        return _STATS_HEADER.pack(StatsType.PORT, body.flags) + _PORT_STATS_REQUEST.pack(body.port_no)
    if isinstance(body, PortStatsReply):
        out = bytearray(_STATS_HEADER.pack(StatsType.PORT, body.flags))
        for s in body.stats:
            out += _PORT_STATS.pack(
                s.port_no, s.rx_packets, s.tx_packets, s.rx_bytes, s.tx_bytes,
                s.rx_dropped, s.tx_dropped, s.rx_errors, s.tx_errors,
                s.rx_frame_err, s.rx_over_err, s.rx_crc_err, s.collisions,
            )
        return bytes(out)
    raise MalformedBody(f"Unsupported body type: {type(body).__name__}")


def encoded_length(body: Body) -> int:
    return OFP_HEADER_SIZE + len(_encode_body(body))


def encode(msg: OfMessage) -> bytes:
    """Encode a message to wire bytes.

    Raises OversizeBody if the message does not fit the 16-bit length field.
    """
    body = _encode_body(msg.body)
    length = OFP_HEADER_SIZE + len(body)
    if length > OFP_MAX_LENGTH:
        raise OversizeBody(f"Encoded length {length} exceeds {OFP_MAX_LENGTH}")
    return _HEADER.pack(OFP_VERSION, msg.msg_type, length, msg.xid) + body


# ---------------------------------------------------------------------------
# Decode
# ---------------------------------------------------------------------------

def read_header(data: bytes | bytearray | memoryview, offset: int = 0) -> OfHeader:
    """Read the fixed header. Raises Truncated below 8 bytes."""
    available = len(data) - offset
    if available < OFP_HEADER_SIZE:
        raise Truncated(OFP_HEADER_SIZE, available)
    version, msg_type, length, xid = _HEADER.unpack_from(data, offset)
    if length < OFP_HEADER_SIZE:
        raise MalformedBody(f"Header length {length} below header size")
    return OfHeader(version, msg_type, length, xid)


def _decode_actions(raw: bytes) -> list[Action]:
    actions: list[Action] = []
    pos = 0
    while pos < len(raw):
        if pos + _ACTION_HEADER.size > len(raw):
            raise MalformedBody("Truncated action header")
        a_type, a_len = _ACTION_HEADER.unpack_from(raw, pos)
        if a_len < 8 or a_len % 8 or pos + a_len > len(raw):
            raise MalformedBody(f"Bad action length {a_len}")
        if a_type == ActionType.OUTPUT:
            if a_len != _ACTION_OUTPUT.size:
                raise MalformedBody(f"Output action of length {a_len}")
            _, _, port, max_len = _ACTION_OUTPUT.unpack_from(raw, pos)
            actions.append(ActionOutput(port, max_len))
        else:
            actions.append(RawAction(a_type, bytes(raw[pos + 4 : pos + a_len])))
        pos += a_len
    return actions


def _decode_body(header: OfHeader, body: bytes) -> Body:
    t = header.msg_type
    try:
        if t == MsgType.HELLO:
            return Hello()
        if t == MsgType.ECHO_REQUEST:
            return EchoRequest(body)
        if t == MsgType.ECHO_REPLY:
            return EchoReply(body)
        if t == MsgType.FEATURES_REQUEST:
            return FeaturesRequest()
        if t == MsgType.FEATURES_REPLY:
            dpid, n_buffers, n_tables, caps, actions = _FEATURES_REPLY.unpack_from(body)
            ports = body[_FEATURES_REPLY.size:]
            if len(ports) % PHY_PORT_SIZE:
                raise MalformedBody(f"Port array of {len(ports)} bytes")
            return FeaturesReply(dpid, n_buffers, n_tables, caps, actions, ports)
        if t == MsgType.PACKET_IN:
            buffer_id, total_len, in_port, reason = _PACKET_IN.unpack_from(body)
            return PacketIn(buffer_id, total_len, in_port, reason, body[_PACKET_IN.size:])
        if t == MsgType.PACKET_OUT:
            buffer_id, in_port, actions_len = _PACKET_OUT.unpack_from(body)
            end = _PACKET_OUT.size + actions_len
            if end > len(body):
                raise MalformedBody(f"actions_len {actions_len} overruns body")
            actions = _decode_actions(body[_PACKET_OUT.size:end])
            return PacketOut(buffer_id, in_port, actions, body[end:])
        if t in (MsgType.STATS_REQUEST, MsgType.STATS_REPLY):
            stats_type, flags = _STATS_HEADER.unpack_from(body)
            if stats_type != StatsType.PORT:
                raise UnknownType(t, header.length, header.xid)
            rest = body[_STATS_HEADER.size:]
            if t == MsgType.STATS_REQUEST:
                (port_no,) = _PORT_STATS_REQUEST.unpack_from(rest)
                return PortStatsRequest(port_no, flags)
            if len(rest) % _PORT_STATS.size:
                raise MalformedBody(f"Port stats array of {len(rest)} bytes")
            stats = [
                PortStats(*_PORT_STATS.unpack_from(rest, pos))
                for pos in range(0, len(rest), _PORT_STATS.size)
            ]
            return PortStatsReply(stats, flags)
    except struct.error as e:
        raise MalformedBody(f"{MsgType(t).name}: {e}") from e
    raise UnknownType(t, header.length, header.xid)


def decode(data: bytes | bytearray | memoryview, offset: int = 0) -> tuple[OfMessage, int]:
    """Decode one message starting at ``offset``.

    Returns the message and the number of bytes it occupied (header.length).
    Raises Truncated if the buffer holds less than one full message,
    UnknownType for unsupported types (skip ``err.length`` bytes), and
    MalformedBody for structurally invalid bodies.
    """
    header = read_header(data, offset)
    available = len(data) - offset
    if available < header.length:
        raise Truncated(header.length, available)
    if header.version != OFP_VERSION and header.msg_type != MsgType.HELLO:
        raise MalformedBody(f"Unsupported OpenFlow version {header.version:#x}")
    body = bytes(data[offset + OFP_HEADER_SIZE : offset + header.length])
    return OfMessage(_decode_body(header, body), header.xid), header.length


# ---------------------------------------------------------------------------
# Stream framing
# ---------------------------------------------------------------------------

def split_frames(buffer: bytearray) -> list[bytes]:
    """Cut complete raw messages off the front of ``buffer``.

    Only the header is inspected, so forwarding paths can relay bytes
    untouched. The trailing partial message is left in ``buffer``.
    """
    frames: list[bytes] = []
    pos = 0
    end = len(buffer)
    while end - pos >= OFP_HEADER_SIZE:
        (length,) = struct.unpack_from("!H", buffer, pos + 2)
        if length < OFP_HEADER_SIZE:
            del buffer[:pos]
            raise MalformedBody(f"Header length {length} below header size")
        if end - pos < length:
            break
        frames.append(bytes(buffer[pos : pos + length]))
        pos += length
    del buffer[:pos]
    return frames


def frame_stream(
    buffer: bytearray,
    on_unknown: Callable[[UnknownType], None] | None = None,
    on_malformed: Callable[[CodecError], None] | None = None,
) -> list[OfMessage]:
    """Decode every complete message in ``buffer``, keeping the remainder.

    Unsupported message types are skipped and reported to ``on_unknown``.
    A frame whose body does not decode is skipped and reported to
    ``on_malformed``; the frames after it are still returned. Without
    ``on_malformed`` the error propagates and the rest of ``buffer``'s
    complete frames are lost. A header length below 8 desynchronizes the
    stream and always raises MalformedBody.
    """
    messages: list[OfMessage] = []
    for frame in split_frames(buffer):
        try:
            msg, _ = decode(frame)
        except UnknownType as e:
            log.debug("Skipping %s", e)
            if on_unknown is not None:
                on_unknown(e)
            continue
        except (MalformedBody, Truncated) as e:
            log.debug("Skipping malformed frame: %s", e)
            if on_malformed is None:
                raise
            on_malformed(e)
            continue
        messages.append(msg)
    return messages


class Framer:
    """Per-connection receive buffer counting unknown and malformed frames."""

    __slots__ = ("buffer", "unknown", "malformed")

    def __init__(self) -> None:
        self.buffer = bytearray()
        self.unknown = 0
        self.malformed = 0

    def _count(self, _err: UnknownType) -> None:
        self.unknown += 1

    def _count_malformed(self, _err: CodecError) -> None:
        self.malformed += 1

    def feed(self, data: bytes) -> list[OfMessage]:
        self.buffer += data
        return frame_stream(self.buffer, self._count, self._count_malformed)

    def feed_raw(self, data: bytes) -> list[bytes]:
        self.buffer += data
        return split_frames(self.buffer)


# ---------------------------------------------------------------------------
# Raw-frame helpers (no full decode)
# ---------------------------------------------------------------------------

def peek_type(frame: bytes) -> int:
    return frame[1]


def peek_xid(frame: bytes) -> int:
    return _HEADER.unpack_from(frame)[3]


def with_xid(frame: bytes, xid: int) -> bytes:
    """Return ``frame`` with its xid replaced."""
    return frame[:4] + struct.pack("!I", xid) + frame[8:]


def packet_out(xid: int, data: bytes, out_port: int, in_port: int = 0xFFFF) -> bytes:
    """Encode a PacketOut carrying ``data`` with a single output action."""
    return encode(OfMessage(PacketOut(NO_BUFFER, in_port, [ActionOutput(out_port)], data), xid))
