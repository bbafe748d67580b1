"""OpenFlow 1.0 codec: encode/decode, stream framing, error cases."""

from __future__ import annotations

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfbench.errors import MalformedBody, OversizeBody, Truncated, UnknownType
from perfbench.openflow import codec
from perfbench.openflow.types import (
    NO_BUFFER,
    ActionOutput,
    EchoReply,
    EchoRequest,
    FeaturesReply,
    FeaturesRequest,
    Hello,
    MsgType,
    OfMessage,
    PacketIn,
    PacketOut,
    Port,
    PortStats,
    PortStatsReply,
    PortStatsRequest,
)

# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------

u16 = st.integers(0, 0xFFFF)
u32 = st.integers(0, 0xFFFFFFFF)
u64 = st.integers(0, 2**64 - 1)
payload = st.binary(max_size=200)

bodies = st.one_of(
    st.just(Hello()),
    st.builds(EchoRequest, payload),
    st.builds(EchoReply, payload),
    st.just(FeaturesRequest()),
    st.builds(FeaturesReply, u64, u32, st.integers(0, 255), u32, u32,
              st.integers(0, 3).map(lambda n: b"\x00" * 48 * n)),
    st.builds(PacketIn, u32, u16, u16, st.integers(0, 1), payload),
    st.builds(PacketOut, u32, u16,
              st.lists(st.builds(ActionOutput, u16, u16), max_size=3), payload),
    st.builds(PortStatsRequest, u16),
    st.builds(PortStatsReply, st.lists(st.builds(PortStats, u16, u64, u64), max_size=3)),
)
messages = st.builds(OfMessage, bodies, u32)


def _raw(msg_type: int, body: bytes = b"", xid: int = 0, version: int = 1) -> bytes:
    return struct.pack("!BBHI", version, msg_type, 8 + len(body), xid) + body


# ---------------------------------------------------------------------------
# Encode / decode
# ---------------------------------------------------------------------------

class TestRoundTrip:
    @given(messages)
    @settings(max_examples=10_000, deadline=None)
    def test_decode_inverts_encode(self, msg):
        raw = codec.encode(msg)
        decoded, consumed = codec.decode(raw)
        assert consumed == len(raw)
        assert decoded == msg

    @given(messages)
    def test_length_field_matches(self, msg):
        raw = codec.encode(msg)
        assert struct.unpack_from("!H", raw, 2)[0] == len(raw)
        assert msg.header.length == len(raw)

    def test_echo_request_example_bytes(self):
        raw = codec.encode(OfMessage(EchoRequest(), xid=42))
        assert raw == bytes.fromhex("0102000800 00002a".replace(" ", ""))

    def test_packet_out_layout(self):
        data = b"\xaa" * 64
        raw = codec.packet_out(7, data, out_port=1)
        assert len(raw) == codec.PACKET_OUT_OVERHEAD + 64
        assert raw[1] == MsgType.PACKET_OUT
        buffer_id, in_port, actions_len = struct.unpack_from("!IHH", raw, 8)
        assert buffer_id == NO_BUFFER
        assert in_port == Port.NONE
        assert actions_len == 8
        assert raw[-64:] == data

    def test_port_stats_reply_size(self):
        raw = codec.encode(OfMessage(PortStatsReply([PortStats(1), PortStats(2)])))
        assert len(raw) == 8 + 4 + 2 * 104


class TestDecodeErrors:
    def test_short_header_is_truncated(self):
        with pytest.raises(Truncated) as exc:
            codec.decode(b"\x01\x02\x00")
        assert exc.value.needed == 8

    def test_short_body_is_truncated(self):
        raw = codec.encode(OfMessage(EchoRequest(b"abcd")))
        with pytest.raises(Truncated):
            codec.decode(raw[:-1])

    def test_unknown_type_reports_length(self):
        raw = _raw(MsgType.FLOW_MOD, b"\x00" * 16, xid=5)
        with pytest.raises(UnknownType) as exc:
            codec.decode(raw)
        assert exc.value.length == 24
        assert exc.value.xid == 5

    def test_non_port_stats_is_unknown(self):
        with pytest.raises(UnknownType):
            codec.decode(_raw(MsgType.STATS_REQUEST, struct.pack("!HH", 0, 0)))

    def test_bad_version(self):
        with pytest.raises(MalformedBody):
            codec.decode(_raw(MsgType.ECHO_REQUEST, version=4))

    def test_hello_any_version(self):
        msg, _ = codec.decode(_raw(MsgType.HELLO, version=4))
        assert isinstance(msg.body, Hello)

    def test_bad_action_length(self):
        body = struct.pack("!IHH", NO_BUFFER, 0xFFFF, 8) + struct.pack("!HHHH", 0, 4, 1, 0)
        with pytest.raises(MalformedBody):
            codec.decode(_raw(MsgType.PACKET_OUT, body))

    def test_header_length_below_eight(self):
        with pytest.raises(MalformedBody):
            codec.decode(b"\x01\x02\x00\x04\x00\x00\x00\x00")

    def test_oversize_encode(self):
        with pytest.raises(OversizeBody):
            codec.encode(OfMessage(EchoRequest(b"\x00" * 0xFFFF)))

    def test_codec_errors_are_value_errors(self):
        with pytest.raises(ValueError):
            codec.decode(b"")


# ---------------------------------------------------------------------------
# Stream framing
# ---------------------------------------------------------------------------

class TestFraming:
    @given(st.lists(messages, max_size=8), st.lists(st.integers(1, 64), max_size=20))
    @settings(max_examples=10_000, deadline=None)
    def test_any_segmentation_yields_same_messages(self, msgs, cuts):
        stream = b"".join(codec.encode(m) for m in msgs)
        framer = codec.Framer()
        got = []
        pos = 0
        for cut in cuts:
            got += framer.feed(stream[pos : pos + cut])
            pos += cut
        got += framer.feed(stream[pos:])
        assert got == msgs
        assert framer.buffer == bytearray()

    def test_partial_message_stays_buffered(self):
        raw = codec.encode(OfMessage(EchoRequest(b"xyz"), 3))
        buf = bytearray(raw + raw[:5])
        frames = codec.split_frames(buf)
        assert frames == [raw]
        assert bytes(buf) == raw[:5]

    def test_unknown_types_skipped_and_counted(self):
        framer = codec.Framer()
        echo = codec.encode(OfMessage(EchoRequest(), 1))
        got = framer.feed(_raw(MsgType.BARRIER_REQUEST) + echo)
        assert [m.xid for m in got] == [1]
        assert framer.unknown == 1

    def test_malformed_frame_skipped_rest_kept(self):
        framer = codec.Framer()
        first = codec.encode(OfMessage(EchoRequest(b"a"), 1))
        last = codec.encode(OfMessage(EchoRequest(b"b"), 3))
        got = framer.feed(first + _raw(MsgType.ECHO_REQUEST, xid=2, version=4) + last)
        assert [m.xid for m in got] == [1, 3]
        assert framer.malformed == 1
        assert framer.buffer == bytearray()

    def test_malformed_without_callback_raises(self):
        with pytest.raises(MalformedBody):
            codec.frame_stream(bytearray(_raw(MsgType.ECHO_REQUEST, version=4)))

    def test_split_frames_rejects_bad_length(self):
        with pytest.raises(MalformedBody):
            codec.split_frames(bytearray(b"\x01\x02\x00\x02\x00\x00\x00\x00"))

    def test_raw_helpers(self):
        raw = codec.encode(OfMessage(PortStatsRequest(), 9))
        assert codec.peek_type(raw) == MsgType.STATS_REQUEST
        assert codec.peek_xid(raw) == 9
        assert codec.peek_xid(codec.with_xid(raw, 77)) == 77
