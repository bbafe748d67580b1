"""Data-plane emulation (data-plane half of the benchmark).

Injects per-tenant probe frames towards the switch emulator's data port,
each one expected to come back as a PACKET_IN at the owning tenant's
controller. Also receives the data packets the switch emits for
PACKET_OUTs and correlates them with the controllers' send records.

One injector task per tenant shares a single UDP socket; one receiver
endpoint reads every returning datagram.
"""

from __future__ import annotations

import asyncio
import logging
import socket
from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import DuplicateReply, MalformedProbe, SendFailed, UnmatchedReply
from .packet import PAYLOAD_OFFSET, build_frame
from .probe import TAG_SIZE, PendingTable, ProbeTag, RunClock, correlate_packet_out
from .scheduler import AchievedRate, RatePlan, run_clocked
from .controller import Sink, Workload
from .slices import TenantIdentity

log = logging.getLogger("perfbench")

SOCKET_BUFFER = 4 * 1024 * 1024


def _enlarge_buffers(sock: socket.socket) -> None:
    for opt in (socket.SO_RCVBUF, socket.SO_SNDBUF):
        try:
            sock.setsockopt(socket.SOL_SOCKET, opt, SOCKET_BUFFER)
        except OSError:
            pass


@dataclass
class DataPlaneCounters:
    received: int = 0
    matched: int = 0
    malformed: int = 0
    unmatched: int = 0
    sent: int = 0
    send_errors: int = 0


class _Receiver(asyncio.DatagramProtocol):
    def __init__(self, owner: DataPlane) -> None:
        self.owner = owner

    def datagram_received(self, data: bytes, addr) -> None:
        self.owner.on_data_packet(data, self.owner.clock.now())

    def error_received(self, exc: Exception) -> None:
        log.debug("Data-plane receiver error: %s", exc)


class _Sender(asyncio.DatagramProtocol):
    def __init__(self, owner: DataPlane) -> None:
        self.owner = owner

    def error_received(self, exc: Exception) -> None:
        self.owner.counters.send_errors += 1
        log.debug("Data-plane send error: %s", exc)


class DataPlane:
    """Probe injector + data packet receiver."""

    def __init__(
        self,
        clock: RunClock,
        tables: Mapping[int, PendingTable],
        sink: Sink,
        switch_addr: tuple[str, int],
        listen_addr: tuple[str, int],
        *,
        translated: bool = False,
        probe_size: int = 64,
        run_id: int = 0,
    ) -> None:
        self.clock = clock
        self.tables = tables
        self.sink = sink
        self.switch_addr = switch_addr
        self.listen_addr = listen_addr
        self.translated = translated
        self.probe_size = probe_size
        self.run_id = run_id
        self.counters = DataPlaneCounters()
        self._rx: Optional[asyncio.DatagramTransport] = None
        self._tx: Optional[asyncio.DatagramTransport] = None
        self._templates: dict[int, tuple[bytes, bytes]] = {}

    async def start(self) -> None:
        loop = asyncio.get_running_loop()
        self._rx, _ = await loop.create_datagram_endpoint(
            lambda: _Receiver(self), local_addr=self.listen_addr
        )
        self._tx, _ = await loop.create_datagram_endpoint(
            lambda: _Sender(self), remote_addr=self.switch_addr
        )
        for transport in (self._rx, self._tx):
            sock = transport.get_extra_info("socket")
            if sock is not None:
                _enlarge_buffers(sock)
        log.debug("Data plane listening on %s:%d", *self.listen_addr)

    @property
    def bound_addr(self) -> tuple[str, int]:
        assert self._rx is not None
        return self._rx.get_extra_info("sockname")[:2]

    def close(self) -> None:
        for transport in (self._rx, self._tx):
            if transport is not None:
                transport.close()
        self._rx = self._tx = None

    # -- injection --

    def _template(self, ident: TenantIdentity) -> tuple[bytes, bytes]:
        tpl = self._templates.get(ident.tenant_id)
        if tpl is None:
            mac, ip = ident.wire(self.translated)
            frame = build_frame(mac, ip, ident.udp_port, b"\x00" * TAG_SIZE, self.probe_size)
            tpl = (frame[:PAYLOAD_OFFSET], frame[PAYLOAD_OFFSET + TAG_SIZE:])
            self._templates[ident.tenant_id] = tpl
        return tpl

    def inject_probe(self, ident: TenantIdentity, seq: int) -> None:
        """Send one probe frame for ``ident`` carrying ProbeTag(tenant, seq, now)."""
        tx = self._tx
        if tx is None or tx.is_closing():
            raise SendFailed("Data-plane socket is not open")
        head, tail = self._template(ident)
        send_ts = self.clock.now()
        tag = ProbeTag(ident.tenant_id, seq, send_ts).pack()
        self.tables[ident.tenant_id].insert(
            (ident.tenant_id, seq), seq, send_ts, Workload.PACKET_IN.value
        )
        tx.sendto(head + tag + tail)
        self.counters.sent += 1

    async def run_injector(
        self, ident: TenantIdentity, rate_plan: RatePlan, *, phase_ns: int = 0, overrun_ms: float = 10.0
    ) -> AchievedRate:
        seq = 0

        def emit() -> None:
            nonlocal seq
            self.inject_probe(ident, seq)
            seq += 1

        return await run_clocked(rate_plan, emit, overrun_ms=overrun_ms, phase_ns=phase_ns)

    # -- reception --

    def on_data_packet(self, data: bytes, recv_ts: int) -> None:
        """Correlate a data packet emitted for a PACKET_OUT."""
        self.counters.received += 1
        try:
            sample = correlate_packet_out(self.tables, data, recv_ts, self.run_id)
        except MalformedProbe:
            self.counters.malformed += 1
            return
        except (UnmatchedReply, DuplicateReply) as e:
            self.counters.unmatched += 1
            log.debug("%s", e)
            return
        self.counters.matched += 1
        self.sink(sample)

