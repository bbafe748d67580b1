"""Minimal OpenFlow 1.0 switch emulator.

Stands in for a software switch: answers FEATURES and ECHO, turns every
datagram arriving on its data port into a PACKET_IN, emits PACKET_OUT
packets on the data port, and serves port statistics through a single
FIFO service queue with a fixed per-request cost (1 / stats_capacity).

When port-stats requests arrive faster than ``stats_capacity`` the queue
backlog, and with it the reply latency, grows for as long as the overload
lasts. The PACKET_IN path has no artificial limit.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import logging
import signal
import socket
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import MalformedBody
from .openflow import codec
from .openflow.types import (
    NO_BUFFER,
    ActionOutput,
    EchoReply,
    EchoRequest,
    FeaturesReply,
    FeaturesRequest,
    Hello,
    OfMessage,
    PacketIn,
    PacketInReason,
    PacketOut,
    Port,
    PortStats,
    PortStatsReply,
    PortStatsRequest,
)

log = logging.getLogger("perfbench")

DATA_PORT_NO = 1
SOCKET_BUFFER = 4 * 1024 * 1024


@dataclass
class SwitchConfig:
    host: str = "127.0.0.1"
    control_port: int = 6633
    datapath_id: int = 1
    data_host: str = "127.0.0.1"
    data_port: int = 16001
    data_peer_host: str = "127.0.0.1"
    data_peer_port: int = 16002
    stats_capacity: float = 7500.0
    stats_queue_bound: int = 1_000_000
    counters_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.stats_capacity <= 0:
            raise ValueError(f"stats_capacity must be > 0, got {self.stats_capacity}")

    @property
    def stats_service_cost(self) -> float:
        """Seconds spent serving one port-stats request."""
        return 1.0 / self.stats_capacity


@dataclass
class SwitchCounters:
    connections: int = 0
    data_rx: int = 0
    data_rx_bytes: int = 0
    data_tx: int = 0
    data_tx_bytes: int = 0
    packet_in_sent: int = 0
    packet_in_dropped: int = 0
    packet_out_received: int = 0
    stats_requests: int = 0
    stats_replies: int = 0
    stats_dropped: int = 0
    stats_queue_high_water: int = 0
    echo_replies: int = 0
    features_replies: int = 0
    protocol_errors: int = 0
    unknown: int = 0
    stats_arrivals_per_second: list[int] = field(default_factory=list)


class _DataPort(asyncio.DatagramProtocol):
    def __init__(self, switch: SwitchEmulator) -> None:
        self.switch = switch

    def datagram_received(self, data: bytes, addr) -> None:
        self.switch.on_data_packet(data)


class SwitchEmulator:
    def __init__(self, cfg: SwitchConfig) -> None:
        self.cfg = cfg
        self.counters = SwitchCounters()
        self._controllers: list[asyncio.StreamWriter] = []
        self._server: Optional[asyncio.base_events.Server] = None
        self._data: Optional[asyncio.DatagramTransport] = None
        self._stats_queue: asyncio.Queue = asyncio.Queue(maxsize=cfg.stats_queue_bound)
        self._stats_task: Optional[asyncio.Task] = None
        self._busy_until = 0
        self._epoch = time.monotonic_ns()

    # -- lifecycle --

    async def start(self) -> None:
        cfg = self.cfg
        loop = asyncio.get_running_loop()
        self._server = await asyncio.start_server(self.serve_control, cfg.host, cfg.control_port)
        self._data, _ = await loop.create_datagram_endpoint(
            lambda: _DataPort(self),
            local_addr=(cfg.data_host, cfg.data_port),
        )
        sock = self._data.get_extra_info("socket")
        if sock is not None:
            with contextlib.suppress(OSError):
                sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, SOCKET_BUFFER)
        self._stats_task = asyncio.ensure_future(self.stats_service_loop())
        log.info("Switch dpid=%#x control %s:%d data %s:%d (stats capacity %.0f/s)",
                 cfg.datapath_id, cfg.host, self.control_port, cfg.data_host, cfg.data_port,
                 cfg.stats_capacity)

    @property
    def control_port(self) -> int:
        assert self._server is not None
        return self._server.sockets[0].getsockname()[1]

    @property
    def data_port(self) -> int:
        assert self._data is not None
        return self._data.get_extra_info("sockname")[1]

    async def stop(self) -> None:
        if self._stats_task is not None:
            self._stats_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._stats_task
        for writer in list(self._controllers):
            writer.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        if self._data is not None:
            self._data.close()
        if self.cfg.counters_path:
            self.write_counters(self.cfg.counters_path)

    def write_counters(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self.counters), indent=2))

    # -- control channel --

    async def serve_control(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        """Serve one control connection until it closes or misbehaves."""
        peer = writer.get_extra_info("peername")
        self.counters.connections += 1
        framer = codec.Framer()
        writer.write(codec.encode(OfMessage(Hello())))
        self._controllers.append(writer)
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                for msg in framer.feed(data):
                    self._handle(msg, writer)
        except MalformedBody as e:
            self.counters.protocol_errors += 1
            log.warning("Switch: protocol error from %s: %s", peer, e)
        except (ConnectionError, OSError) as e:
            log.debug("Switch: connection %s ended: %s", peer, e)
        finally:
            self.counters.unknown += framer.unknown
            self.counters.protocol_errors += framer.malformed
            with contextlib.suppress(ValueError):
                self._controllers.remove(writer)
            writer.close()

    def _handle(self, msg: OfMessage, writer: asyncio.StreamWriter) -> None:
        body = msg.body
        if isinstance(body, PacketOut):
            self.counters.packet_out_received += 1
            self._emit_packet_out(body)
        elif isinstance(body, PortStatsRequest):
            self._enqueue_stats(writer, msg.xid, body.port_no)
        elif isinstance(body, EchoRequest):
            self.counters.echo_replies += 1
            writer.write(codec.encode(OfMessage(EchoReply(body.payload), msg.xid)))
        elif isinstance(body, FeaturesRequest):
            self.counters.features_replies += 1
            writer.write(codec.encode(OfMessage(FeaturesReply(self.cfg.datapath_id), msg.xid)))
        elif isinstance(body, Hello):
            pass
        else:
            self.counters.unknown += 1

    def _emit_packet_out(self, body: PacketOut) -> None:
        if self._data is None or body.buffer_id != NO_BUFFER:
            return
        peer = (self.cfg.data_peer_host, self.cfg.data_peer_port)
        for action in body.actions:
            if isinstance(action, ActionOutput):
                self._data.sendto(body.data, peer)
                self.counters.data_tx += 1
                self.counters.data_tx_bytes += len(body.data)

    # -- data port --

    def on_data_packet(self, data: bytes) -> None:
        """Wrap a datagram from the data port in a PACKET_IN to every controller."""
        self.counters.data_rx += 1
        self.counters.data_rx_bytes += len(data)
        if not self._controllers:
            self.counters.packet_in_dropped += 1
            return
        raw = codec.encode(OfMessage(
            PacketIn(NO_BUFFER, len(data), DATA_PORT_NO, PacketInReason.NO_MATCH, data)
        ))
        for writer in self._controllers:
            writer.write(raw)
            self.counters.packet_in_sent += 1

    # -- port statistics --

    def _enqueue_stats(self, writer: asyncio.StreamWriter, xid: int, port_no: int) -> None:
        now = time.monotonic_ns()
        counters = self.counters
        counters.stats_requests += 1
        second = (now - self._epoch) // 1_000_000_000
        per_second = counters.stats_arrivals_per_second
        while len(per_second) <= second:
            per_second.append(0)
        per_second[second] += 1
        try:
            self._stats_queue.put_nowait((writer, xid, port_no, now))
        except asyncio.QueueFull:
            counters.stats_dropped += 1
            return
        depth = self._stats_queue.qsize()
        if depth > counters.stats_queue_high_water:
            counters.stats_queue_high_water = depth

    @property
    def stats_backlog(self) -> int:
        return self._stats_queue.qsize()

    def port_stats(self, port_no: int) -> list[PortStats]:
        c = self.counters
        if port_no not in (Port.NONE, DATA_PORT_NO):
            return []
        return [PortStats(
            DATA_PORT_NO,
            rx_packets=c.data_rx, tx_packets=c.data_tx,
            rx_bytes=c.data_rx_bytes, tx_bytes=c.data_tx_bytes,
        )]

    async def stats_service_loop(self) -> None:
        """Serve queued port-stats requests in FIFO order at ``stats_capacity``.

        Each request completes ``stats_service_cost`` after the later of its
        arrival and the previous completion.
        """
        cost_ns = int(self.cfg.stats_service_cost * 1e9)
        queue = self._stats_queue
        while True:
            writer, xid, port_no, arrival = await queue.get()
            done = max(arrival, self._busy_until) + cost_ns
            self._busy_until = done
            delay = done - time.monotonic_ns()
            if delay > 0:
                await asyncio.sleep(delay / 1e9)
            if writer.is_closing():
                continue
            reply = OfMessage(PortStatsReply(self.port_stats(port_no)), xid)
            writer.write(codec.encode(reply))
            self.counters.stats_replies += 1


async def serve_switch(cfg: SwitchConfig, on_ready: Optional[Callable[[], None]] = None) -> None:
    """Run a switch until SIGINT/SIGTERM, then write counters."""
    switch = SwitchEmulator(cfg)
    await switch.start()
    if on_ready is not None:
        on_ready()
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        with contextlib.suppress(NotImplementedError):
            loop.add_signal_handler(sig, stop.set)
    await stop.wait()
    await switch.stop()
    log.info("Switch stopped: %d PACKET_IN, %d stats requests",
             switch.counters.packet_in_sent, switch.counters.stats_requests)
