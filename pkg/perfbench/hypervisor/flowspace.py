"""fv-mode flowspace slicing.

Every tenant owns one rule matching data packets by UDP source-port range
and, optionally, by Ethernet source MAC. Rules must be disjoint: a packet
belongs to at most one slice. Forwarding never touches the message bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from ..errors import MalformedProbe, NoMatchingSlice, OverlappingFlowspace
from ..openflow.codec import PACKET_IN_OVERHEAD
from ..packet import mac_to_str, parse_headers
from ..slices import TenantIdentity

log = logging.getLogger("perfbench")


@dataclass(frozen=True)
class FlowspaceRule:
    tenant_id: int
    port_lo: int
    port_hi: int
    src_mac: Optional[bytes] = None

    def __post_init__(self) -> None:
        if not 0 <= self.port_lo <= self.port_hi <= 0xFFFF:
            raise ValueError(f"Bad UDP port range {self.port_lo}..{self.port_hi}")

    def matches(self, src_port: int, src_mac: bytes) -> bool:
        if not self.port_lo <= src_port <= self.port_hi:
            return False
        return self.src_mac is None or self.src_mac == src_mac

    def overlaps(self, other: FlowspaceRule) -> bool:
        if self.port_hi < other.port_lo or other.port_hi < self.port_lo:
            return False
        if self.src_mac is not None and other.src_mac is not None:
            return self.src_mac == other.src_mac
        return True

    def describe(self) -> str:
        mac = f" mac={mac_to_str(self.src_mac)}" if self.src_mac else ""
        return f"tenant {self.tenant_id}: udp_sport {self.port_lo}-{self.port_hi}{mac}"


class Flowspace:
    """Disjoint set of FlowspaceRules, one per tenant."""

    def __init__(self, rules: Iterable[FlowspaceRule]) -> None:
        self.rules: list[FlowspaceRule] = []
        owners: set[int] = set()
        for rule in rules:
            if rule.tenant_id in owners:
                raise OverlappingFlowspace(f"Tenant {rule.tenant_id} has more than one rule")
            for other in self.rules:
                if rule.overlaps(other):
                    raise OverlappingFlowspace(
                        f"Rules overlap: [{rule.describe()}] and [{other.describe()}]"
                    )
            owners.add(rule.tenant_id)
            self.rules.append(rule)
        # Exact-port rules are the common case; index them
        self._by_port = {
            r.port_lo: r for r in self.rules if r.port_lo == r.port_hi
        }

    @classmethod
    def for_identities(cls, idents: Iterable[TenantIdentity]) -> Flowspace:
        """One single-port rule per tenant on its UDP source port."""
        return cls(FlowspaceRule(i.tenant_id, i.udp_port, i.udp_port) for i in idents)

    @property
    def tenants(self) -> list[int]:
        return [r.tenant_id for r in self.rules]

    def lookup(self, frame: bytes) -> int:
        """Tenant owning the data packet ``frame``."""
        try:
            headers = parse_headers(frame)
        except MalformedProbe as e:
            raise NoMatchingSlice(f"Unparseable data packet: {e}") from e
        rule = self._by_port.get(headers.src_port)
        if rule is not None and rule.matches(headers.src_port, headers.src_mac):
            return rule.tenant_id
        for rule in self.rules:
            if rule.matches(headers.src_port, headers.src_mac):
                return rule.tenant_id
        raise NoMatchingSlice(
            f"No slice for udp_sport={headers.src_port} mac={mac_to_str(headers.src_mac)}"
        )


def fv_forward_up(flowspace: Flowspace, packet_in: bytes) -> tuple[int, bytes]:
    """Pick the owner of an encoded PACKET_IN; the bytes are returned unchanged."""
    return flowspace.lookup(packet_in[PACKET_IN_OVERHEAD:]), packet_in


def fv_forward_down(tenant_id: int, message: bytes) -> bytes:
    """Tenant-to-switch direction: forwarded as is, PortStatsRequests included."""
    return message
