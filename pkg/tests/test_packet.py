"""Probe carrier frames and tenant identities."""

from __future__ import annotations

import struct

import pytest

from perfbench.errors import MalformedProbe
from perfbench.packet import (
    IP_OFFSET,
    PAYLOAD_OFFSET,
    UDP_OFFSET,
    build_frame,
    ip_to_bytes,
    ip_to_str,
    ipv4_checksum,
    mac_to_bytes,
    mac_to_str,
    parse_headers,
    rewrite_source,
    src_port_of,
)
from perfbench.slices import identities, identity_for


def _checksum_ok(frame: bytes) -> bool:
    header = bytearray(frame[IP_OFFSET:UDP_OFFSET])
    stored = struct.unpack_from("!H", header, 10)[0]
    header[10:12] = b"\x00\x00"
    return ipv4_checksum(bytes(header)) == stored


class TestFrame:
    def test_build_and_parse(self):
        frame = build_frame(mac_to_bytes("02:00:00:00:00:07"), ip_to_bytes("10.0.0.7"), 20007, b"tag")
        assert len(frame) == 64
        h = parse_headers(frame)
        assert mac_to_str(h.src_mac) == "02:00:00:00:00:07"
        assert ip_to_str(h.src_ip) == "10.0.0.7"
        assert h.src_port == 20007
        assert frame[PAYLOAD_OFFSET:PAYLOAD_OFFSET + 3] == b"tag"
        assert _checksum_ok(frame)

    def test_larger_size_pads(self):
        frame = build_frame(b"\x02" * 6, b"\x0a" * 4, 1, b"", size=128)
        assert len(frame) == 128

    def test_rewrite_recomputes_checksum(self):
        frame = build_frame(b"\x02\x00\x00\x00\x00\x01", b"\x0a\x00\x00\x01", 20001, b"")
        out = rewrite_source(frame, b"\x02\x00\x00\x01\x00\x01", b"\x0a\x01\x00\x01")
        h = parse_headers(out)
        assert h.src_ip == b"\x0a\x01\x00\x01"
        assert _checksum_ok(out)
        assert out[UDP_OFFSET:] == frame[UDP_OFFSET:]

    def test_rewrite_back_restores(self):
        frame = build_frame(b"\x02\x00\x00\x00\x00\x01", b"\x0a\x00\x00\x01", 20001, b"x")
        there = rewrite_source(frame, b"\x02\x00\x00\x01\x00\x01", b"\x0a\x01\x00\x01")
        assert rewrite_source(there, b"\x02\x00\x00\x00\x00\x01", b"\x0a\x00\x00\x01") == frame

    def test_not_ipv4(self):
        frame = bytearray(build_frame(b"\x02" * 6, b"\x0a" * 4, 1, b""))
        frame[12:14] = b"\x86\xdd"
        with pytest.raises(MalformedProbe):
            parse_headers(bytes(frame))

    def test_short_frame(self):
        with pytest.raises(MalformedProbe):
            parse_headers(b"\x00" * 20)

    @pytest.mark.parametrize("bad", ["02:00", "zz:00:00:00:00:00"])
    def test_bad_mac(self, bad):
        with pytest.raises(ValueError):
            mac_to_bytes(bad)

    def test_bad_ip(self):
        with pytest.raises(ValueError):
            ip_to_bytes("10.0.0.256")


class TestIdentities:
    def test_tenant_three(self):
        ident = identity_for(3)
        assert ident.udp_port == 20003
        assert mac_to_str(ident.virtual_mac) == "02:00:00:00:00:03"
        assert ip_to_str(ident.virtual_ip) == "10.0.0.3"
        assert mac_to_str(ident.physical_mac) == "02:00:00:01:00:03"
        assert ip_to_str(ident.physical_ip) == "10.1.0.3"

    def test_unique_across_tenants(self):
        idents = identities(300)
        assert len({i.virtual_mac for i in idents}) == 300
        assert len({i.physical_mac for i in idents}) == 300
        assert len({i.udp_port for i in idents}) == 300

    def test_wire_side(self):
        ident = identity_for(1)
        assert ident.wire(False) == (ident.virtual_mac, ident.virtual_ip)
        assert ident.wire(True) == (ident.physical_mac, ident.physical_ip)

    def test_frame_carries_port(self):
        ident = identity_for(9)
        frame = build_frame(ident.virtual_mac, ident.virtual_ip, ident.udp_port, b"")
        assert src_port_of(frame) == 20009

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            identity_for(0)
