"""Hypervisor proxy: one upstream switch connection, one listener per tenant.

Tenant t connects to ``listen_port_base + t``; the port identifies the slice.

fv mode
    Transparent. Tenant messages go upstream byte-identical (HELLO is
    terminated locally) except that ECHO/FEATURES/STATS requests get a
    proxy-wide xid, restored on the reply, so replies reach the requester
    even when tenants reuse xids or the switch drops a request. PACKET_INs
    are delivered to the flowspace owner. Everything runs on one event loop
    with no per-tenant actors.

ovx mode
    Translating. ECHO and FEATURES are answered on behalf of the switch,
    port stats come from a cache refreshed by a poller at ``poll_rate``,
    PACKET_OUT data is rewritten virtual -> physical and PACKET_IN data
    physical -> virtual. Each tenant connection is served by its own task.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import logging
import signal
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from ..errors import (
    ConnectFailed,
    HandshakeTimeout,
    MalformedBody,
    NoMatchingSlice,
    NoMatchingTenant,
    UnknownType,
    UnknownVirtualAddress,
)
from ..openflow import codec
from ..openflow.types import (
    EchoReply,
    FeaturesReply,
    FeaturesRequest,
    Hello,
    MsgType,
    OfMessage,
    PortStatsReply,
    PortStatsRequest,
)
from ..slices import identities
from .flowspace import Flowspace, fv_forward_down, fv_forward_up
from .translation import (
    MappingTable,
    StatsCache,
    ovx_stats_cache,
    ovx_translate_down,
    ovx_translate_up,
)

log = logging.getLogger("perfbench")

UPSTREAM_XID = 0xFFFFFFFF

# Request types whose replies must be routed back to the requesting tenant
_REPLY_FOR = {
    MsgType.ECHO_REQUEST: MsgType.ECHO_REPLY,
    MsgType.FEATURES_REQUEST: MsgType.FEATURES_REPLY,
    MsgType.STATS_REQUEST: MsgType.STATS_REPLY,
}
_REPLY_TYPES = frozenset(_REPLY_FOR.values())


class ProxyMode(str, Enum):
    FV = "fv"
    OVX = "ovx"


@dataclass
class ProxyConfig:
    mode: ProxyMode = ProxyMode.FV
    tenants: int = 1
    switch_host: str = "127.0.0.1"
    switch_port: int = 6633
    listen_host: str = "127.0.0.1"
    listen_port_base: int = 6700
    poll_rate: float = 1.0
    connect_timeout: float = 5.0
    counters_path: Optional[str] = None

    def __post_init__(self) -> None:
        self.mode = ProxyMode(self.mode)
        if self.tenants < 1:
            raise ValueError(f"tenants must be >= 1, got {self.tenants}")
        if self.poll_rate <= 0:
            raise ValueError(f"poll_rate must be > 0, got {self.poll_rate}")

    def listen_port(self, tenant_id: int) -> int:
        return self.listen_port_base + tenant_id


@dataclass
class ProxyCounters:
    tenant_connections: int = 0
    tenant_disconnects: int = 0
    down_forwarded: int = 0
    up_forwarded: int = 0
    local_replies: int = 0
    stats_served_from_cache: int = 0
    stats_polls_sent: int = 0
    stats_cold_replies: int = 0
    no_matching_slice: int = 0
    no_matching_tenant: int = 0
    unknown_virtual_address: int = 0
    orphan_replies: int = 0
    stale_requests: int = 0
    dropped_no_tenant: int = 0
    unknown: int = 0
    per_tenant_down: dict[int, int] = field(default_factory=dict)


class HypervisorProxy:
    def __init__(self, cfg: ProxyConfig) -> None:
        self.cfg = cfg
        self.counters = ProxyCounters()
        idents = identities(cfg.tenants)
        self.flowspace = Flowspace.for_identities(idents)
        self.mappings = MappingTable.for_identities(idents)
        self.cache = StatsCache()
        self.features: Optional[FeaturesReply] = None
        self._up_reader: Optional[asyncio.StreamReader] = None
        self._up_writer: Optional[asyncio.StreamWriter] = None
        self._tenants: dict[int, asyncio.StreamWriter] = {}
        # upstream xid -> (tenant, tenant xid) for fv requests awaiting a reply
        self._awaiting: dict[int, tuple[int, int]] = {}
        self._next_up_xid = 0
        self._up_leftover = b""
        self._servers: list[asyncio.base_events.Server] = []
        self._tasks: list[asyncio.Task] = []

    # -- lifecycle --

    async def start(self) -> None:
        await self._connect_upstream()
        for tenant_id in self.flowspace.tenants:
            server = await asyncio.start_server(
                lambda r, w, t=tenant_id: self.serve_tenant(t, r, w),
                self.cfg.listen_host, self.cfg.listen_port(tenant_id),
            )
            self._servers.append(server)
        self._tasks.append(asyncio.ensure_future(self.proxy_session_loop()))
        if self.cfg.mode is ProxyMode.OVX:
            self._tasks.append(asyncio.ensure_future(self._poll_stats()))
        log.info("Proxy (%s) for %d tenants on %s:%d.., switch %s:%d",
                 self.cfg.mode.value, self.cfg.tenants, self.cfg.listen_host,
                 self.cfg.listen_port(1), self.cfg.switch_host, self.cfg.switch_port)

    async def _connect_upstream(self) -> None:
        cfg = self.cfg
        try:
            self._up_reader, self._up_writer = await asyncio.wait_for(
                asyncio.open_connection(cfg.switch_host, cfg.switch_port), cfg.connect_timeout
            )
        except (OSError, asyncio.TimeoutError) as e:
            raise ConnectFailed(f"Proxy: cannot reach switch {cfg.switch_host}:{cfg.switch_port}: {e}") from e
        try:
            await asyncio.wait_for(self._handshake_upstream(), cfg.connect_timeout)
        except asyncio.TimeoutError as e:
            raise HandshakeTimeout("Proxy: no HELLO/FEATURES from switch") from e
        log.debug("Proxy: switch dpid=%#x", self.features.datapath_id)

    async def _handshake_upstream(self) -> None:
        assert self._up_reader is not None and self._up_writer is not None
        self._up_writer.write(codec.encode(OfMessage(Hello(), UPSTREAM_XID)))
        self._up_writer.write(codec.encode(OfMessage(FeaturesRequest(), UPSTREAM_XID)))
        framer = codec.Framer()
        got_hello = False
        while not (got_hello and self.features is not None):
            data = await self._up_reader.read(65536)
            if not data:
                raise ConnectFailed("Proxy: switch closed during handshake")
            for msg in framer.feed(data):
                if isinstance(msg.body, Hello):
                    got_hello = True
                elif isinstance(msg.body, FeaturesReply):
                    self.features = msg.body
        # Anything that arrived after the handshake is routed by the session loop
        self._up_leftover = bytes(framer.buffer)

    async def stop(self) -> None:
        for task in self._tasks:
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError, Exception):
                await task
        for writer in list(self._tenants.values()):
            writer.close()
        for server in self._servers:
            server.close()
            await server.wait_closed()
        if self._up_writer is not None:
            self._up_writer.close()
        if self.cfg.counters_path:
            self.write_counters(self.cfg.counters_path)

    def write_counters(self, path: str | Path) -> None:
        data = asdict(self.counters)
        data["mode"] = self.cfg.mode.value
        data["poll_rate"] = self.cfg.poll_rate
        Path(path).write_text(json.dumps(data, indent=2))

    # -- switch side --

    async def proxy_session_loop(self) -> None:
        """Route everything the switch sends to the tenants, per mode."""
        assert self._up_reader is not None
        buffer = bytearray(self._up_leftover)
        route = self._route_up_fv if self.cfg.mode is ProxyMode.FV else self._route_up_ovx
        try:
            while True:
                for frame in codec.split_frames(buffer):
                    route(frame)
                data = await self._up_reader.read(65536)
                if not data:
                    log.warning("Proxy: switch closed the connection")
                    break
                buffer += data
        except MalformedBody as e:
            log.error("Proxy: protocol error from switch: %s", e)
        except (ConnectionError, OSError) as e:
            log.warning("Proxy: switch connection lost: %s", e)
        for writer in list(self._tenants.values()):
            writer.close()

    def _deliver(self, tenant_id: int, frame: bytes) -> None:
        writer = self._tenants.get(tenant_id)
        if writer is None or writer.is_closing():
            self.counters.dropped_no_tenant += 1
            return
        writer.write(frame)
        self.counters.up_forwarded += 1

    def _route_reply(self, frame: bytes) -> None:
        entry = self._awaiting.pop(codec.peek_xid(frame), None)
        if entry is None:
            self.counters.orphan_replies += 1
            return
        tenant_id, tenant_xid = entry
        self._deliver(tenant_id, codec.with_xid(frame, tenant_xid))

    def _route_up_fv(self, frame: bytes) -> None:
        msg_type = codec.peek_type(frame)
        if msg_type == MsgType.PACKET_IN:
            try:
                tenant_id, frame = fv_forward_up(self.flowspace, frame)
            except NoMatchingSlice as e:
                self.counters.no_matching_slice += 1
                log.debug("%s", e)
                return
            self._deliver(tenant_id, frame)
        elif msg_type in _REPLY_TYPES:
            self._route_reply(frame)
        else:
            self._route_common(msg_type, frame)

    def _route_up_ovx(self, frame: bytes) -> None:
        msg_type = codec.peek_type(frame)
        if msg_type == MsgType.PACKET_IN:
            try:
                tenant_id, frame = ovx_translate_up(self.mappings, frame)
            except NoMatchingTenant as e:
                self.counters.no_matching_tenant += 1
                log.debug("%s", e)
                return
            self._deliver(tenant_id, frame)
        elif msg_type == MsgType.STATS_REPLY and StatsCache.is_poll_xid(codec.peek_xid(frame)):
            msg, _ = codec.decode(frame)
            if isinstance(msg.body, PortStatsReply):
                self.cache.update(msg.body)
        else:
            self._route_common(msg_type, frame)

    def _route_common(self, msg_type: int, frame: bytes) -> None:
        assert self._up_writer is not None
        if msg_type == MsgType.ECHO_REQUEST:
            self._up_writer.write(frame[:1] + bytes([MsgType.ECHO_REPLY]) + frame[2:])
        elif msg_type not in (MsgType.HELLO, MsgType.ECHO_REPLY):
            self.counters.unknown += 1

    async def _poll_stats(self) -> None:
        assert self._up_writer is not None
        interval = 1.0 / self.cfg.poll_rate
        request = OfMessage(PortStatsRequest())
        while True:
            request.xid = self.cache.poll_xid()
            self._up_writer.write(codec.encode(request))
            self.counters.stats_polls_sent += 1
            await asyncio.sleep(interval)

    # -- tenant side --

    async def serve_tenant(
        self, tenant_id: int, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        """Serve one tenant connection; other tenants are unaffected by its failure."""
        old = self._tenants.get(tenant_id)
        if old is not None:
            old.close()
        self._tenants[tenant_id] = writer
        self.counters.tenant_connections += 1
        self.counters.per_tenant_down.setdefault(tenant_id, 0)
        writer.write(codec.encode(OfMessage(Hello())))
        route = self._route_down_fv if self.cfg.mode is ProxyMode.FV else self._route_down_ovx
        buffer = bytearray()
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                buffer += data
                for frame in codec.split_frames(buffer):
                    route(tenant_id, frame, writer)
                await self._up_writer.drain()
        except MalformedBody as e:
            log.warning("Proxy: protocol error from tenant %d: %s", tenant_id, e)
        except (ConnectionError, OSError) as e:
            log.debug("Proxy: tenant %d connection ended: %s", tenant_id, e)
        finally:
            self.counters.tenant_disconnects += 1
            if self._tenants.get(tenant_id) is writer:
                del self._tenants[tenant_id]
            writer.close()

    def _forward(self, tenant_id: int, frame: bytes) -> None:
        assert self._up_writer is not None
        self._up_writer.write(frame)
        self.counters.down_forwarded += 1
        self.counters.per_tenant_down[tenant_id] += 1

    def _route_down_fv(self, tenant_id: int, frame: bytes, writer: asyncio.StreamWriter) -> None:
        msg_type = codec.peek_type(frame)
        if msg_type == MsgType.HELLO:
            return
        frame = fv_forward_down(tenant_id, frame)
        if msg_type in _REPLY_FOR:
            up_xid = self._upstream_xid()
            if up_xid in self._awaiting:
                # the request it belonged to was never answered
                self.counters.stale_requests += 1
            self._awaiting[up_xid] = (tenant_id, codec.peek_xid(frame))
            frame = codec.with_xid(frame, up_xid)
        self._forward(tenant_id, frame)

    def _upstream_xid(self) -> int:
        # below the poll xid range, never UPSTREAM_XID
        self._next_up_xid = self._next_up_xid % 0x7FFFFFFF + 1
        return self._next_up_xid

    def _route_down_ovx(self, tenant_id: int, frame: bytes, writer: asyncio.StreamWriter) -> None:
        msg_type = codec.peek_type(frame)
        xid = codec.peek_xid(frame)
        if msg_type == MsgType.PACKET_OUT:
            try:
                frame = ovx_translate_down(self.mappings, tenant_id, frame)
            except UnknownVirtualAddress as e:
                self.counters.unknown_virtual_address += 1
                log.debug("%s", e)
                return
            self._forward(tenant_id, frame)
        elif msg_type == MsgType.STATS_REQUEST:
            try:
                msg, _ = codec.decode(frame)
            except UnknownType:
                self.counters.unknown += 1
                return
            reply, cold = ovx_stats_cache(self.cache, xid, msg.body.port_no)
            writer.write(reply)
            self.counters.stats_served_from_cache += 1
            if cold:
                self.counters.stats_cold_replies += 1
        elif msg_type == MsgType.ECHO_REQUEST:
            msg, _ = codec.decode(frame)
            writer.write(codec.encode(OfMessage(EchoReply(msg.body.payload), xid)))
            self.counters.local_replies += 1
        elif msg_type == MsgType.FEATURES_REQUEST:
            writer.write(codec.encode(OfMessage(self.features, xid)))
            self.counters.local_replies += 1
        elif msg_type in (MsgType.HELLO, MsgType.ECHO_REPLY):
            pass
        else:
            self.counters.unknown += 1


async def serve_proxy(cfg: ProxyConfig, on_ready: Optional[Callable[[], None]] = None) -> None:
    """Run a proxy until SIGINT/SIGTERM, then write counters."""
    proxy = HypervisorProxy(cfg)
    await proxy.start()
    if on_ready is not None:
        on_ready()
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        with contextlib.suppress(NotImplementedError):
            loop.add_signal_handler(sig, stop.set)
    await stop.wait()
    await proxy.stop()
    log.info("Proxy stopped: %d down, %d up", proxy.counters.down_forwarded, proxy.counters.up_forwarded)
