"""Per-tenant slice identities.

Tenant t owns UDP source port 20000 + t and, on the tenant (virtual) side,
MAC 02:00:00:00:hh:ll and IP 10.0.hh.ll where hhll = t. The physical side
used by the address-translating hypervisor is 02:00:00:01:hh:ll and
10.1.hh.ll. With no translating hypervisor in the path the data plane
speaks the virtual addresses directly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .packet import mac_to_str

UDP_PORT_BASE = 20000
MAX_TENANTS = 0xFFFF - UDP_PORT_BASE


@dataclass(frozen=True)
class TenantIdentity:
    tenant_id: int
    udp_port: int
    virtual_mac: bytes
    virtual_ip: bytes
    physical_mac: bytes
    physical_ip: bytes

    def wire(self, translated: bool) -> tuple[bytes, bytes]:
        """(mac, ip) seen on the data-plane wire."""
        if translated:
            return self.physical_mac, self.physical_ip
        return self.virtual_mac, self.virtual_ip

    def describe(self) -> dict:
        return {
            "tenant_id": self.tenant_id,
            "udp_port": self.udp_port,
            "virtual_mac": mac_to_str(self.virtual_mac),
            "virtual_ip": ".".join(map(str, self.virtual_ip)),
            "physical_mac": mac_to_str(self.physical_mac),
            "physical_ip": ".".join(map(str, self.physical_ip)),
        }


def identity_for(tenant_id: int) -> TenantIdentity:
    if not 1 <= tenant_id <= MAX_TENANTS:
        raise ValueError(f"tenant_id out of range: {tenant_id}")
    hi, lo = tenant_id >> 8, tenant_id & 0xFF
    return TenantIdentity(
        tenant_id=tenant_id,
        udp_port=UDP_PORT_BASE + tenant_id,
        virtual_mac=bytes([0x02, 0, 0, 0, hi, lo]),
        virtual_ip=bytes([10, 0, hi, lo]),
        physical_mac=bytes([0x02, 0, 0, 1, hi, lo]),
        physical_ip=bytes([10, 1, hi, lo]),
    )


def identities(count: int) -> list[TenantIdentity]:
    return [identity_for(t) for t in range(1, count + 1)]
