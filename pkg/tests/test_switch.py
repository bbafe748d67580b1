"""Switch emulator over loopback."""

from __future__ import annotations

import asyncio
import itertools
import json
import time

import numpy as np

from perfbench.openflow import codec
from perfbench.openflow.types import (
    NO_BUFFER,
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
from perfbench.scheduler import NS_PER_MS, plan, run_clocked
from perfbench.switch import DATA_PORT_NO, SwitchConfig, SwitchEmulator

from .conftest import LOOPBACK, run


class _Collector(asyncio.DatagramProtocol):
    def __init__(self) -> None:
        self.queue: asyncio.Queue = asyncio.Queue()

    def datagram_received(self, data, addr) -> None:
        self.queue.put_nowait(data)


async def read_messages(reader: asyncio.StreamReader, framer: codec.Framer, count: int) -> list[OfMessage]:
    got: list[OfMessage] = []
    while len(got) < count:
        data = await reader.read(65536)
        assert data, "connection closed early"
        got += framer.feed(data)
    return got


async def start_switch(**kw):
    """Switch on ephemeral ports plus a UDP collector standing in for the data plane."""
    loop = asyncio.get_running_loop()
    sink_transport, sink = await loop.create_datagram_endpoint(_Collector, local_addr=(LOOPBACK, 0))
    cfg = SwitchConfig(control_port=0, data_port=0,
                       data_peer_port=sink_transport.get_extra_info("sockname")[1], **kw)
    switch = SwitchEmulator(cfg)
    await switch.start()
    return switch, sink_transport, sink


async def connect(switch: SwitchEmulator):
    reader, writer = await asyncio.open_connection(LOOPBACK, switch.control_port)
    framer = codec.Framer()
    (hello,) = await read_messages(reader, framer, 1)
    assert isinstance(hello.body, Hello)
    return reader, writer, framer


class TestControlChannel:
    def test_features_and_echo(self):
        async def scenario():
            switch, sink_tr, _ = await start_switch(datapath_id=0xABC)
            reader, writer, framer = await connect(switch)
            writer.write(codec.encode(OfMessage(FeaturesRequest(), 2)))
            writer.write(codec.encode(OfMessage(EchoRequest(b"ping"), 3)))
            features, echo = await read_messages(reader, framer, 2)
            writer.close()
            await switch.stop()
            sink_tr.close()
            return features, echo

        features, echo = run(scenario())
        assert isinstance(features.body, FeaturesReply)
        assert features.xid == 2 and features.body.datapath_id == 0xABC
        assert echo.body == EchoReply(b"ping") and echo.xid == 3

    def test_packet_out_emits_data(self):
        async def scenario():
            switch, sink_tr, sink = await start_switch()
            _, writer, _ = await connect(switch)
            writer.write(codec.packet_out(5, b"\x11" * 64, out_port=1))
            data = await asyncio.wait_for(sink.queue.get(), 5)
            counters = switch.counters
            writer.close()
            await switch.stop()
            sink_tr.close()
            return data, counters

        data, counters = run(scenario())
        assert data == b"\x11" * 64
        assert counters.packet_out_received == 1 and counters.data_tx == 1

    def test_malformed_frame_counted_connection_kept(self):
        async def scenario():
            switch, sink_tr, _ = await start_switch()
            reader, writer, framer = await connect(switch)
            bad = b"\x04\x02\x00\x08\x00\x00\x00\x02"  # ECHO_REQUEST with version 4
            writer.write(codec.encode(OfMessage(EchoRequest(), 1)) + bad
                         + codec.encode(OfMessage(EchoRequest(), 3)))
            replies = await read_messages(reader, framer, 2)
            writer.close()
            await asyncio.sleep(0.05)
            await switch.stop()
            sink_tr.close()
            return replies, switch.counters

        replies, counters = run(scenario())
        assert [r.xid for r in replies] == [1, 3]
        assert counters.echo_replies == 2
        assert counters.protocol_errors == 1


class TestDataPort:
    def test_datagram_becomes_packet_in_for_every_controller(self):
        async def scenario():
            switch, sink_tr, _ = await start_switch()
            a = await connect(switch)
            b = await connect(switch)
            loop = asyncio.get_running_loop()
            tx, _ = await loop.create_datagram_endpoint(
                asyncio.DatagramProtocol, remote_addr=(LOOPBACK, switch.data_port)
            )
            tx.sendto(b"\x22" * 64)
            got = [(await read_messages(r, f, 1))[0] for r, _, f in (a, b)]
            tx.close()
            for _, w, _ in (a, b):
                w.close()
            await switch.stop()
            sink_tr.close()
            return got

        for msg in run(scenario()):
            assert isinstance(msg.body, PacketIn)
            assert msg.body.buffer_id == NO_BUFFER
            assert msg.body.in_port == DATA_PORT_NO
            assert msg.body.data == b"\x22" * 64

    def test_no_controller_drops(self):
        async def scenario():
            switch, sink_tr, _ = await start_switch()
            switch.on_data_packet(b"\x00" * 64)
            await switch.stop()
            sink_tr.close()
            return switch.counters

        counters = run(scenario())
        assert counters.packet_in_dropped == 1 and counters.packet_in_sent == 0


class TestPortStats:
    def test_overload_builds_fifo_backlog(self):
        async def scenario():
            switch, sink_tr, _ = await start_switch(stats_capacity=1000)
            reader, writer, framer = await connect(switch)
            start = time.monotonic()
            writer.write(b"".join(
                codec.encode(OfMessage(PortStatsRequest(), xid)) for xid in range(1, 301)
            ))
            replies = await read_messages(reader, framer, 300)
            elapsed = time.monotonic() - start
            writer.close()
            await switch.stop()
            sink_tr.close()
            return replies, elapsed, switch.counters

        replies, elapsed, counters = run(scenario())
        assert [r.xid for r in replies] == list(range(1, 301))
        assert all(isinstance(r.body, PortStatsReply) for r in replies)
        # 300 requests at 1 ms each cannot finish sooner than 0.3 s
        assert elapsed >= 0.29
        assert counters.stats_requests == 300 and counters.stats_replies == 300
        assert counters.stats_queue_high_water > 100

    def test_queue_bound_overflow_drops_and_counts(self):
        async def scenario():
            switch, sink_tr, _ = await start_switch(stats_capacity=100, stats_queue_bound=1)
            reader, writer, framer = await connect(switch)
            writer.write(b"".join(
                codec.encode(OfMessage(PortStatsRequest(), xid)) for xid in (1, 2, 3)
            ))
            got = await read_messages(reader, framer, 1)
            # 10 ms service time each; anything still queued would be answered by now
            await asyncio.sleep(0.1)
            writer.close()
            await switch.stop()
            sink_tr.close()
            return got, switch.counters

        got, counters = run(scenario())
        assert got[0].xid == 1
        assert counters.stats_requests == 3
        assert counters.stats_dropped >= 1
        assert counters.stats_replies + counters.stats_dropped == 3
        assert counters.stats_queue_high_water == 1

    def test_under_capacity_latency_near_service_cost(self):
        async def scenario():
            switch, sink_tr, _ = await start_switch()  # 7500/s
            reader, writer, framer = await connect(switch)
            sent: dict[int, int] = {}
            xids = itertools.count(1)

            def emit():
                xid = next(xids)
                sent[xid] = time.monotonic_ns()
                writer.write(codec.encode(OfMessage(PortStatsRequest(), xid)))

            async def collect():
                latencies = []
                while len(latencies) < 5000:
                    data = await reader.read(65536)
                    now = time.monotonic_ns()
                    latencies += [now - sent[m.xid] for m in framer.feed(data)]
                return latencies

            collector = asyncio.ensure_future(collect())
            await run_clocked(plan(5000, 1), emit, flush=writer.drain)
            latencies = await asyncio.wait_for(collector, 5)
            writer.close()
            await switch.stop()
            sink_tr.close()
            return np.array(latencies), switch.counters

        latencies, counters = run(scenario())
        assert len(latencies) == 5000
        assert counters.stats_dropped == 0
        # service cost is 0.13 ms; no backlog builds below capacity
        assert np.median(latencies) < 2 * NS_PER_MS
        assert counters.stats_queue_high_water < 50

    def test_counters_written_on_stop(self, tmp_path):
        path = tmp_path / "switch.json"

        async def scenario():
            switch, sink_tr, _ = await start_switch(counters_path=str(path))
            _, writer, _ = await connect(switch)
            writer.close()
            await asyncio.sleep(0.05)
            await switch.stop()
            sink_tr.close()

        run(scenario())
        data = json.loads(path.read_text())
        assert data["connections"] == 1
        assert "stats_queue_high_water" in data
