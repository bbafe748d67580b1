"""ovx-mode address translation and port-stats caching.

Tenants see virtual MAC/IP addresses, the switch and the data plane see
physical ones. PACKET_OUT data is rewritten virtual -> physical on the way
down, PACKET_IN data physical -> virtual on the way up. The tenant owning
a PACKET_IN is found by its unique physical source MAC.

Port statistics never reach the switch on a tenant's behalf: a poller
refreshes a cache at ``poll_rate`` and tenant requests are answered from it.

Raw PACKET_OUT layout (after the 8-byte header):
    buffer_id(4) in_port(2) actions_len(2) actions(actions_len) data
"""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass
from typing import Iterable, Optional

from ..errors import MalformedProbe, NoMatchingTenant, UnknownVirtualAddress
from ..openflow import codec
from ..openflow.codec import PACKET_IN_OVERHEAD
from ..openflow.types import OFP_HEADER_SIZE, MsgType, OfMessage, PortStats, PortStatsReply
from ..packet import ETH_SRC, IP_SRC, mac_to_str, parse_headers, rewrite_source
from ..slices import TenantIdentity

log = logging.getLogger("perfbench")

_ACTIONS_LEN_OFFSET = OFP_HEADER_SIZE + 6
_PACKET_OUT_FIXED = OFP_HEADER_SIZE + 8


@dataclass(frozen=True)
class VirtualMapping:
    tenant_id: int
    virtual_mac: bytes
    virtual_ip: bytes
    physical_mac: bytes
    physical_ip: bytes

    @classmethod
    def from_identity(cls, ident: TenantIdentity) -> VirtualMapping:
        return cls(ident.tenant_id, ident.virtual_mac, ident.virtual_ip,
                   ident.physical_mac, ident.physical_ip)

    def to_physical(self, frame: bytes) -> bytes:
        return rewrite_source(frame, self.physical_mac, self.physical_ip)

    def to_virtual(self, frame: bytes) -> bytes:
        return rewrite_source(frame, self.virtual_mac, self.virtual_ip)


class MappingTable:
    """Per-tenant virtual <-> physical mappings; both sides must be unique."""

    def __init__(self, mappings: Iterable[VirtualMapping]) -> None:
        self.by_tenant: dict[int, VirtualMapping] = {}
        self.by_physical_mac: dict[bytes, VirtualMapping] = {}
        seen_virtual: set[bytes] = set()
        for m in mappings:
            if m.tenant_id in self.by_tenant:
                raise ValueError(f"Tenant {m.tenant_id} mapped twice")
            if m.physical_mac in self.by_physical_mac or m.virtual_mac in seen_virtual:
                raise ValueError(f"Tenant {m.tenant_id}: address already mapped")
            self.by_tenant[m.tenant_id] = m
            self.by_physical_mac[m.physical_mac] = m
            seen_virtual.add(m.virtual_mac)

    @classmethod
    def for_identities(cls, idents: Iterable[TenantIdentity]) -> MappingTable:
        return cls(VirtualMapping.from_identity(i) for i in idents)


# ---------------------------------------------------------------------------
# Translation
# ---------------------------------------------------------------------------

def ovx_translate_down(table: MappingTable, tenant_id: int, message: bytes) -> bytes:
    """Rewrite the data of a tenant's PACKET_OUT to physical addresses.

    Other message types are returned unchanged.
    """
    if message[1] != MsgType.PACKET_OUT:
        return message
    mapping = table.by_tenant.get(tenant_id)
    if mapping is None:
        raise UnknownVirtualAddress(f"Tenant {tenant_id} has no address mapping")
    (actions_len,) = struct.unpack_from("!H", message, _ACTIONS_LEN_OFFSET)
    data_at = _PACKET_OUT_FIXED + actions_len
    data = message[data_at:]
    try:
        headers = parse_headers(data)
    except MalformedProbe as e:
        raise UnknownVirtualAddress(f"Tenant {tenant_id}: unparseable PACKET_OUT data: {e}") from e
    if headers.src_mac != mapping.virtual_mac or headers.src_ip != mapping.virtual_ip:
        raise UnknownVirtualAddress(
            f"Tenant {tenant_id}: source {mac_to_str(headers.src_mac)} is not its virtual address"
        )
    return message[:data_at] + mapping.to_physical(data)


def ovx_translate_up(table: MappingTable, packet_in: bytes) -> tuple[int, bytes]:
    """Find the owner of an encoded PACKET_IN and rewrite its data to virtual addresses."""
    data = packet_in[PACKET_IN_OVERHEAD:]
    if len(data) < IP_SRC + 4:
        raise NoMatchingTenant(f"PACKET_IN data too short: {len(data)} bytes")
    mapping = table.by_physical_mac.get(bytes(data[ETH_SRC : ETH_SRC + 6]))
    if mapping is None:
        raise NoMatchingTenant(f"No tenant for source MAC {mac_to_str(data[ETH_SRC:ETH_SRC + 6])}")
    try:
        rewritten = mapping.to_virtual(data)
    except MalformedProbe as e:
        raise NoMatchingTenant(str(e)) from e
    return mapping.tenant_id, packet_in[:PACKET_IN_OVERHEAD] + rewritten


# ---------------------------------------------------------------------------
# Port-stats cache
# ---------------------------------------------------------------------------

POLL_XID_BASE = 0x80000000


class StatsCache:
    """Latest port counters pulled from the switch; written only by the poller."""

    def __init__(self) -> None:
        self.stats: list[PortStats] = []
        self.updated_ns: Optional[int] = None
        self.polls_sent = 0
        self.polls_answered = 0
        self.cold_replies = 0
        self._next_poll = 0

    @property
    def cold(self) -> bool:
        return self.updated_ns is None

    def poll_xid(self) -> int:
        """xid for the next poll; disjoint from tenant-chosen xids below 2**31."""
        xid = POLL_XID_BASE + (self._next_poll & 0x7FFFFFFF)
        self._next_poll += 1
        self.polls_sent += 1
        return xid

    @staticmethod
    def is_poll_xid(xid: int) -> bool:
        return xid >= POLL_XID_BASE

    def update(self, reply: PortStatsReply) -> None:
        self.stats = list(reply.stats)
        self.updated_ns = time.monotonic_ns()
        self.polls_answered += 1


def ovx_stats_cache(cache: StatsCache, xid: int, port_no: int) -> tuple[bytes, bool]:
    """Answer a tenant's port-stats request from the cache.

    Returns the encoded reply and whether the cache was still cold; a cold
    cache yields a zeroed entry for the requested port.
    """
    if cache.cold:
        cache.cold_replies += 1
        if cache.cold_replies == 1:
            log.warning("Stats cache cold: answering with zero counters until the first poll")
        stats = [PortStats(port_no if port_no != 0xFFFF else 1)]
        return codec.encode(OfMessage(PortStatsReply(stats), xid)), True
    if port_no == 0xFFFF:
        stats = cache.stats
    else:
        stats = [s for s in cache.stats if s.port_no == port_no]
    return codec.encode(OfMessage(PortStatsReply(stats), xid)), False
