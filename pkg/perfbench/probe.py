"""Probe tags and request/reply correlation.

Latency definitions:
    synchronous (PORT_STATS, ECHO, FEATURES):
        request sent -> reply received, keyed by xid
    PACKET_IN:
        UDP probe sent by the data plane -> PACKET_IN received by the controller
    PACKET_OUT:
        PACKET_OUT sent by the controller -> data packet received by the data plane

Asynchronous messages are keyed by (tenant_id, seq) read from a ProbeTag
embedded in the frame payload. Send and receive timestamps come from one
monotonic clock shared by the controller and data-plane emulators, so
latencies are never negative.

ProbeTag layout (big-endian, 22 bytes):
    magic     uint32  0x50464228
    tenant_id uint16
    seq       uint64
    send_ts   uint64  ns since run epoch
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from typing import Any, ClassVar, Hashable, Mapping, Optional

from .errors import DuplicateReply, MalformedProbe, UnmatchedReply
from .packet import PAYLOAD_OFFSET

log = logging.getLogger("perfbench")

PROBE_MAGIC = 0x50464228
_TAG = struct.Struct("!IHQQ")
TAG_SIZE = _TAG.size  # 22


class RunClock:
    """Monotonic nanosecond clock with its epoch at run start."""

    __slots__ = ("epoch",)

    def __init__(self, epoch: int | None = None) -> None:
        self.epoch = time.monotonic_ns() if epoch is None else epoch

    def now(self) -> int:
        return time.monotonic_ns() - self.epoch


@dataclass(frozen=True)
class ProbeTag:
    tenant_id: int
    seq: int
    send_ts: int

    def pack(self) -> bytes:
        return _TAG.pack(PROBE_MAGIC, self.tenant_id, self.seq, self.send_ts)

    @classmethod
    def unpack(cls, data: bytes, offset: int = 0) -> ProbeTag:
        if len(data) - offset < TAG_SIZE:
            raise MalformedProbe(f"Payload too short for probe tag: {len(data) - offset} bytes")
        magic, tenant_id, seq, send_ts = _TAG.unpack_from(data, offset)
        if magic != PROBE_MAGIC:
            raise MalformedProbe(f"Bad probe magic {magic:#010x}")
        return cls(tenant_id, seq, send_ts)

    @classmethod
    def from_frame(cls, frame: bytes) -> ProbeTag:
        """Read the tag from the payload of a probe frame."""
        return cls.unpack(frame, PAYLOAD_OFFSET)


@dataclass(frozen=True)
class LatencySample:
    run_id: int
    tenant_id: int
    seq: int
    msg_type: str
    send_ts: int
    recv_ts: int

    @property
    def latency(self) -> int:
        return self.recv_ts - self.send_ts


@dataclass
class PendingTable:
    """Outstanding requests of one tenant, keyed by xid or (tenant_id, seq).

    Every key is inserted once and leaves exactly once: matched or expired.
    Keys are inserted in increasing order. Once ``settled`` holds more than
    ``SETTLED_LIMIT`` keys it is folded into ``floor``, the largest settled
    key; a key at or below the floor that is not pending counts as settled.
    """

    SETTLED_LIMIT: ClassVar[int] = 4096

    tenant_id: int
    pending: dict[Hashable, tuple[int, int, str]] = field(default_factory=dict)
    settled: set[Hashable] = field(default_factory=set)
    floor: Optional[Any] = None
    sent: int = 0
    matched: int = 0
    expired: int = 0
    unmatched: int = 0
    duplicates: int = 0
    malformed: int = 0
    foreign: int = 0

    def insert(self, key: Hashable, seq: int, send_ts: int, msg_type: str) -> None:
        if key in self.pending or self._was_settled(key):
            raise KeyError(f"Key {key!r} inserted twice")
        self.pending[key] = (seq, send_ts, msg_type)
        self.sent += 1

    def settle(self, key: Hashable) -> tuple[int, int, str]:
        """Remove ``key`` and return (seq, send_ts, msg_type)."""
        entry = self.pending.pop(key, None)
        if entry is None:
            if self._was_settled(key):
                self.duplicates += 1
                raise DuplicateReply(f"Tenant {self.tenant_id}: duplicate reply for {key!r}")
            self.unmatched += 1
            raise UnmatchedReply(f"Tenant {self.tenant_id}: no request for {key!r}")
        self._add_settled(key)
        self.matched += 1
        return entry

    def expire(self, older_than: int, now: int) -> int:
        """Drop entries sent more than ``older_than`` ns before ``now``; count them as losses."""
        cutoff = now - older_than
        stale = [k for k, (_, send_ts, _) in self.pending.items() if send_ts < cutoff]
        for key in stale:
            del self.pending[key]
            self._add_settled(key)
        self.expired += len(stale)
        return len(stale)

    def _was_settled(self, key: Hashable) -> bool:
        if key in self.settled:
            return True
        if self.floor is None:
            return False
        try:
            return key <= self.floor
        except TypeError:
            return False

    def _add_settled(self, key: Hashable) -> None:
        self.settled.add(key)
        if len(self.settled) <= self.SETTLED_LIMIT:
            return
        try:
            top = max(self.settled)
        except TypeError:
            # mixed key kinds cannot be ordered
            return
        if self.floor is None or top > self.floor:
            self.floor = top
        self.settled.clear()

    @property
    def outstanding(self) -> int:
        return len(self.pending)


# ---------------------------------------------------------------------------
# Correlation
# ---------------------------------------------------------------------------

def correlate_sync(table: PendingTable, reply_xid: int, recv_ts: int, run_id: int = 0) -> LatencySample:
    """Match a synchronous reply to its request by xid."""
    seq, send_ts, msg_type = table.settle(reply_xid)
    return LatencySample(run_id, table.tenant_id, seq, msg_type, send_ts, recv_ts)


def correlate_tag(
    tables: Mapping[int, PendingTable], tag: ProbeTag, recv_ts: int, run_id: int
) -> LatencySample:
    table = tables.get(tag.tenant_id)
    if table is None:
        raise UnmatchedReply(f"Probe for unknown tenant {tag.tenant_id}")
    seq, send_ts, msg_type = table.settle((tag.tenant_id, tag.seq))
    return LatencySample(run_id, tag.tenant_id, seq, msg_type, send_ts, recv_ts)


def correlate_packet_in(
    tables: Mapping[int, PendingTable], frame: bytes, recv_ts: int, run_id: int = 0
) -> LatencySample:
    """Probe sent by the data plane -> PACKET_IN carrying ``frame`` received."""
    return correlate_tag(tables, ProbeTag.from_frame(frame), recv_ts, run_id)


def correlate_packet_out(
    tables: Mapping[int, PendingTable], data_packet: bytes, recv_ts: int, run_id: int = 0
) -> LatencySample:
    """PACKET_OUT sent by a controller -> its data packet received by the data plane."""
    return correlate_tag(tables, ProbeTag.from_frame(data_packet), recv_ts, run_id)
