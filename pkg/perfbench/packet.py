"""Ethernet / IPv4 / UDP frames that carry probe tags.

The data plane and the switch emulator exchange these frames as UDP
payload, standing in for a physical link. Headers are real so that
flowspace matching and address rewriting work on actual header fields:

    0   Ethernet  dst(6) src(6) ethertype(2)            14 bytes
    14  IPv4      20 bytes, no options, checksum valid
    34  UDP       sport dport length checksum(0)         8 bytes
    42  payload   probe tag + zero padding
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import MalformedProbe

ETH_HEADER = struct.Struct("!6s6sH")
IPV4_HEADER = struct.Struct("!BBHHHBBH4s4s")
UDP_HEADER = struct.Struct("!HHHH")

ETHERTYPE_IPV4 = 0x0800
IPPROTO_UDP = 17

ETH_SRC = 6
IP_OFFSET = ETH_HEADER.size
IP_CHECKSUM = IP_OFFSET + 10
IP_SRC = IP_OFFSET + 12
UDP_OFFSET = IP_OFFSET + IPV4_HEADER.size
PAYLOAD_OFFSET = UDP_OFFSET + UDP_HEADER.size  # 42

# Destination the probe frames are addressed to (the data-plane sink)
SINK_MAC = bytes.fromhex("0200000000fe")
SINK_IP = bytes([10, 255, 255, 254])
SINK_UDP_PORT = 30000


def mac_to_bytes(mac: str) -> bytes:
    raw = bytes.fromhex(mac.replace(":", ""))
    if len(raw) != 6:
        raise ValueError(f"Bad MAC address: {mac!r}")
    return raw


def mac_to_str(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


def ip_to_bytes(ip: str) -> bytes:
    parts = [int(p) for p in ip.split(".")]
    if len(parts) != 4 or not all(0 <= p <= 255 for p in parts):
        raise ValueError(f"Bad IPv4 address: {ip!r}")
    return bytes(parts)


def ip_to_str(raw: bytes) -> str:
    return ".".join(str(b) for b in raw)


def ipv4_checksum(header: bytes) -> int:
    """One's-complement sum over a 20-byte header (checksum field zeroed by caller)."""
    total = sum(struct.unpack("!10H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


@dataclass(frozen=True)
class FrameHeaders:
    src_mac: bytes
    dst_mac: bytes
    src_ip: bytes
    dst_ip: bytes
    src_port: int
    dst_port: int


def build_frame(
    src_mac: bytes,
    src_ip: bytes,
    src_port: int,
    payload: bytes,
    size: int = 64,
) -> bytes:
    """Build a frame of exactly ``size`` bytes (payload zero-padded)."""
    payload_len = max(size - PAYLOAD_OFFSET, len(payload))
    payload = payload.ljust(payload_len, b"\x00")
    udp_len = UDP_HEADER.size + payload_len
    ip_len = IPV4_HEADER.size + udp_len
    ip = IPV4_HEADER.pack(0x45, 0, ip_len, 0, 0, 64, IPPROTO_UDP, 0, src_ip, SINK_IP)
    ip = ip[:10] + struct.pack("!H", ipv4_checksum(ip)) + ip[12:]
    return (
        ETH_HEADER.pack(SINK_MAC, src_mac, ETHERTYPE_IPV4)
        + ip
        + UDP_HEADER.pack(src_port, SINK_UDP_PORT, udp_len, 0)
        + payload
    )


def parse_headers(frame: bytes) -> FrameHeaders:
    """Parse the fixed Ethernet/IPv4/UDP headers.

    Raises MalformedProbe for anything that is not an option-less IPv4/UDP frame.
    """
    if len(frame) < PAYLOAD_OFFSET:
        raise MalformedProbe(f"Frame too short: {len(frame)} bytes")
    dst_mac, src_mac, ethertype = ETH_HEADER.unpack_from(frame)
    if ethertype != ETHERTYPE_IPV4:
        raise MalformedProbe(f"Not IPv4: ethertype {ethertype:#06x}")
    ver_ihl, _, _, _, _, _, proto, _, src_ip, dst_ip = IPV4_HEADER.unpack_from(frame, IP_OFFSET)
    if ver_ihl != 0x45 or proto != IPPROTO_UDP:
        raise MalformedProbe("Not an option-less IPv4/UDP frame")
    src_port, dst_port, _, _ = UDP_HEADER.unpack_from(frame, UDP_OFFSET)
    return FrameHeaders(src_mac, dst_mac, src_ip, dst_ip, src_port, dst_port)


def src_mac_of(frame: bytes) -> bytes:
    return bytes(frame[ETH_SRC : ETH_SRC + 6])


def src_port_of(frame: bytes) -> int:
    (port,) = struct.unpack_from("!H", frame, UDP_OFFSET)
    return port


def rewrite_source(frame: bytes, mac: bytes, ip: bytes) -> bytes:
    """Return ``frame`` with Ethernet/IPv4 source replaced and the IP checksum recomputed."""
    if len(frame) < PAYLOAD_OFFSET:
        raise MalformedProbe(f"Frame too short: {len(frame)} bytes")
    out = bytearray(frame)
    out[ETH_SRC : ETH_SRC + 6] = mac
    out[IP_SRC : IP_SRC + 4] = ip
    out[IP_CHECKSUM : IP_CHECKSUM + 2] = b"\x00\x00"
    struct.pack_into("!H", out, IP_CHECKSUM, ipv4_checksum(bytes(out[IP_OFFSET:UDP_OFFSET])))
    return bytes(out)
