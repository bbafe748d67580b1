"""Tenant controller emulation (control-plane half of the benchmark).

Each tenant is an independent actor: its own TCP connection to the
hypervisor (or straight to the switch), its own scheduler and its own
PendingTable. Completed samples go to a single collector via ``sink``.

TCP_NODELAY is applied per connection. asyncio enables it on every TCP
transport, so ``nodelay=False`` clears it explicitly to let the kernel
aggregate small writes (Nagle).
"""

from __future__ import annotations

import asyncio
import contextlib
import logging
import socket
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .errors import (
    ConnectFailed,
    DuplicateReply,
    HandshakeTimeout,
    MalformedBody,
    MalformedProbe,
    UnmatchedReply,
    WriteFailed,
)
from .openflow import codec
from .openflow.types import (
    EchoReply,
    EchoRequest,
    FeaturesReply,
    FeaturesRequest,
    Hello,
    OfMessage,
    PacketIn,
    PortStatsReply,
    PortStatsRequest,
)
from .packet import PAYLOAD_OFFSET, build_frame
from .probe import (
    TAG_SIZE,
    LatencySample,
    PendingTable,
    ProbeTag,
    RunClock,
    correlate_sync,
    correlate_tag,
)
from .scheduler import AchievedRate, plan, run_clocked
from .slices import TenantIdentity

log = logging.getLogger("perfbench")

Sink = Callable[[LatencySample], None]


class Workload(str, Enum):
    PACKET_IN = "packet_in"
    PACKET_OUT = "packet_out"
    PORT_STATS = "port_stats"
    ECHO = "echo"
    FEATURES = "features"

    @property
    def synchronous(self) -> bool:
        return self in (Workload.PORT_STATS, Workload.ECHO, Workload.FEATURES)


def split_rate(total_rate: int, tenants: int) -> list[int]:
    """Per-tenant rates summing exactly to ``total_rate``; remainder goes to the lowest ids."""
    if tenants < 1:
        raise ValueError(f"tenants must be >= 1, got {tenants}")
    base, extra = divmod(total_rate, tenants)
    return [base + (1 if i < extra else 0) for i in range(tenants)]


@dataclass
class TenantConfig:
    tenant_id: int
    host: str
    port: int
    rate: int
    workload: Workload
    nodelay: bool
    identity: TenantIdentity
    duration: int = 30
    probe_size: int = 64
    out_port: int = 1
    phase_ns: int = 0
    overrun_ms: float = 10.0
    connect_timeout: float = 5.0
    handshake_timeout: float = 5.0


@dataclass
class TenantStatus:
    tenant_id: int
    datapath_id: Optional[int] = None
    achieved: Optional[AchievedRate] = None
    failure: Optional[str] = None
    unknown: int = 0
    malformed: int = 0
    echo_served: int = 0
    writes: int = 0


class TenantController:
    """One emulated tenant SDN controller."""

    def __init__(
        self,
        cfg: TenantConfig,
        clock: RunClock,
        table: PendingTable,
        sink: Sink,
        run_id: int = 0,
    ) -> None:
        self.cfg = cfg
        self.clock = clock
        self.table = table
        self._tables = {cfg.tenant_id: table}
        self.sink = sink
        self.run_id = run_id
        self.status = TenantStatus(cfg.tenant_id)
        self._reader: Optional[asyncio.StreamReader] = None
        self._writer: Optional[asyncio.StreamWriter] = None
        self._framer = codec.Framer()
        self._read_task: Optional[asyncio.Task] = None
        self._next_xid = 1
        self._seq = 0
        self._prepare_templates()

    # -- templates --

    def _prepare_templates(self) -> None:
        ident = self.cfg.identity
        frame = build_frame(
            ident.virtual_mac, ident.virtual_ip, ident.udp_port,
            b"\x00" * TAG_SIZE, self.cfg.probe_size,
        )
        self._frame_head = frame[:PAYLOAD_OFFSET]
        self._frame_tail = frame[PAYLOAD_OFFSET + TAG_SIZE:]
        po = codec.packet_out(0, frame, self.cfg.out_port)
        self._po_prefix = bytearray(po[: len(po) - len(frame)])
        self._stats_request = bytearray(codec.encode(OfMessage(PortStatsRequest())))
        self._echo_request = bytearray(codec.encode(OfMessage(EchoRequest())))
        self._features_request = bytearray(codec.encode(OfMessage(FeaturesRequest())))

    def _xid(self) -> int:
        xid = self._next_xid
        self._next_xid = (xid + 1) & 0x7FFFFFFF
        return xid

    # -- lifecycle --

    async def start(self) -> None:
        """Connect, apply the no-delay option, and complete HELLO + FEATURES."""
        cfg = self.cfg
        try:
            self._reader, self._writer = await asyncio.wait_for(
                asyncio.open_connection(cfg.host, cfg.port), cfg.connect_timeout
            )
        except (OSError, asyncio.TimeoutError) as e:
            raise ConnectFailed(f"Tenant {cfg.tenant_id}: cannot reach {cfg.host}:{cfg.port}: {e}") from e

        sock = self._writer.get_extra_info("socket")
        if sock is not None:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1 if cfg.nodelay else 0)

        try:
            await asyncio.wait_for(self._handshake(), cfg.handshake_timeout)
        except asyncio.TimeoutError as e:
            await self.close()
            raise HandshakeTimeout(f"Tenant {cfg.tenant_id}: no HELLO/FEATURES from peer") from e
        log.debug("Tenant %d connected (nodelay=%s, dpid=%s)",
                  cfg.tenant_id, cfg.nodelay, self.status.datapath_id)
        self._read_task = asyncio.ensure_future(self._read_loop())

    async def _handshake(self) -> None:
        assert self._reader is not None and self._writer is not None
        self._writer.write(codec.encode(OfMessage(Hello(), self._xid())))
        features_xid = self._xid()
        self._writer.write(codec.encode(OfMessage(FeaturesRequest(), features_xid)))
        await self._writer.drain()
        got_hello = False
        while not (got_hello and self.status.datapath_id is not None):
            data = await self._reader.read(65536)
            if not data:
                raise ConnectFailed(f"Tenant {self.cfg.tenant_id}: peer closed during handshake")
            for msg in self._framer.feed(data):
                if isinstance(msg.body, Hello):
                    got_hello = True
                elif isinstance(msg.body, FeaturesReply) and msg.xid == features_xid:
                    self.status.datapath_id = msg.body.datapath_id
                elif isinstance(msg.body, EchoRequest):
                    self._writer.write(codec.encode(OfMessage(EchoReply(msg.body.payload), msg.xid)))

    async def run(self) -> Optional[AchievedRate]:
        """Emit this tenant's workload for the configured duration."""
        cfg = self.cfg
        emitters = {
            Workload.PACKET_OUT: self.emit_packet_out,
            Workload.PORT_STATS: self.emit_port_stats,
            Workload.ECHO: self.emit_echo,
            Workload.FEATURES: self.emit_features,
        }
        emitter = emitters.get(cfg.workload)
        if emitter is None or cfg.rate <= 0:
            # PACKET_IN load is generated by the data plane; just listen
            await asyncio.sleep(cfg.duration + cfg.phase_ns / 1e9)
            return None

        def emit() -> None:
            emitter(self._seq)
            self._seq += 1

        try:
            self.status.achieved = await run_clocked(
                plan(cfg.rate, cfg.duration), emit,
                flush=self._drain, overrun_ms=cfg.overrun_ms, phase_ns=cfg.phase_ns,
            )
        except WriteFailed as e:
            self.status.failure = str(e)
            log.error("%s", e)
        return self.status.achieved

    async def _drain(self) -> None:
        assert self._writer is not None
        try:
            await self._writer.drain()
        except (ConnectionError, OSError) as e:
            raise WriteFailed(f"Tenant {self.cfg.tenant_id}: {e}") from e

    async def close(self) -> None:
        if self._read_task is not None:
            self._read_task.cancel()
            with contextlib.suppress(asyncio.CancelledError, Exception):
                await self._read_task
            self._read_task = None
        if self._writer is not None:
            self._writer.close()
            with contextlib.suppress(Exception):
                await self._writer.wait_closed()
            self._writer = None

    # -- emission --

    def _write(self, data: bytes) -> None:
        writer = self._writer
        if writer is None or writer.is_closing():
            raise WriteFailed(f"Tenant {self.cfg.tenant_id}: connection closed")
        writer.write(data)
        self.status.writes += 1

    def _write_request(self, template: bytearray, seq: int, workload: Workload) -> None:
        xid = self._xid()
        struct.pack_into("!I", template, 4, xid)
        self.table.insert(xid, seq, self.clock.now(), workload.value)
        self._write(bytes(template))

    def emit_packet_out(self, seq: int) -> None:
        """Send one PACKET_OUT whose data packet carries ProbeTag(tenant, seq, now)."""
        tenant = self.cfg.tenant_id
        send_ts = self.clock.now()
        tag = ProbeTag(tenant, seq, send_ts).pack()
        struct.pack_into("!I", self._po_prefix, 4, self._xid())
        self.table.insert((tenant, seq), seq, send_ts, Workload.PACKET_OUT.value)
        self._write(bytes(self._po_prefix) + self._frame_head + tag + self._frame_tail)

    def emit_port_stats(self, seq: int) -> None:
        self._write_request(self._stats_request, seq, Workload.PORT_STATS)

    def emit_echo(self, seq: int) -> None:
        self._write_request(self._echo_request, seq, Workload.ECHO)

    def emit_features(self, seq: int) -> None:
        self._write_request(self._features_request, seq, Workload.FEATURES)

    # -- reception --

    async def _read_loop(self) -> None:
        assert self._reader is not None
        try:
            while True:
                data = await self._reader.read(65536)
                if not data:
                    break
                recv_ts = self.clock.now()
                for msg in self._framer.feed(data):
                    self.on_message(msg, recv_ts)
        except MalformedBody as e:
            self.status.failure = f"protocol error: {e}"
            log.warning("Tenant %d: %s", self.cfg.tenant_id, e)
        except (ConnectionError, OSError) as e:
            log.debug("Tenant %d read loop ended: %s", self.cfg.tenant_id, e)
        finally:
            self.status.unknown += self._framer.unknown
            self.status.malformed += self._framer.malformed

    def on_message(self, msg: OfMessage, recv_ts: int) -> None:
        body = msg.body
        table = self.table
        try:
            if isinstance(body, PacketIn):
                try:
                    tag = ProbeTag.from_frame(body.data)
                except MalformedProbe:
                    table.malformed += 1
                    return
                if tag.tenant_id != self.cfg.tenant_id:
                    table.foreign += 1
                    return
                self.sink(correlate_tag(self._tables, tag, recv_ts, self.run_id))
            elif isinstance(body, (PortStatsReply, EchoReply, FeaturesReply)):
                self.sink(correlate_sync(table, msg.xid, recv_ts, self.run_id))
            elif isinstance(body, EchoRequest):
                self._write(codec.encode(OfMessage(EchoReply(body.payload), msg.xid)))
                self.status.echo_served += 1
            else:
                self.status.unknown += 1
        except (UnmatchedReply, DuplicateReply) as e:
            log.debug("%s", e)
        except WriteFailed as e:
            log.debug("%s", e)
