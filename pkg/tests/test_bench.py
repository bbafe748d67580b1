"""Full measurement phase over loopback: controllers, data plane, switch and proxies."""

from __future__ import annotations

import socket

import numpy as np
import pytest

from perfbench.bench import BenchConfig, phase_offsets, run_bench
from perfbench.controller import Workload, split_rate
from perfbench.hypervisor import HypervisorProxy, ProxyConfig
from perfbench.runner import free_port, free_port_block
from perfbench.scheduler import NS_PER_MS
from perfbench.switch import SwitchConfig, SwitchEmulator

from .conftest import LOOPBACK, run

RATE = 200


async def _measure(workload: Workload, tenants: int = 1, hypervisor: str = "none",
                   nodelay: bool = False, rate: int = RATE, stats_capacity: float = 7500.0):
    dp_port = free_port(socket.SOCK_DGRAM)
    switch = SwitchEmulator(SwitchConfig(control_port=0, data_port=0, data_peer_port=dp_port,
                                         stats_capacity=stats_capacity))
    await switch.start()
    proxy = None
    if hypervisor == "none":
        ports = [switch.control_port] * tenants
    else:
        proxy = HypervisorProxy(ProxyConfig(
            mode=hypervisor, tenants=tenants, switch_port=switch.control_port,
            listen_port_base=free_port_block(tenants), poll_rate=10.0,
        ))
        await proxy.start()
        ports = [proxy.cfg.listen_port(t) for t in range(1, tenants + 1)]
    try:
        result = await run_bench(BenchConfig(
            workload=workload, tenants=tenants, total_rate=rate, nodelay=nodelay,
            duration=1, control_host=LOOPBACK, control_ports=ports,
            switch_data_addr=(LOOPBACK, switch.data_port),
            dataplane_addr=(LOOPBACK, dp_port),
            translated=hypervisor == "ovx", grace=0.5,
        ))
    finally:
        if proxy is not None:
            await proxy.stop()
        await switch.stop()
    return result, switch, proxy


def _all_answered(result):
    for table in result.tables.values():
        assert table.sent > 0
        assert table.matched == table.sent
        assert table.expired == 0


class TestSwitchOnly:
    @pytest.mark.parametrize("workload", [Workload.ECHO, Workload.FEATURES, Workload.PORT_STATS])
    def test_synchronous(self, workload):
        result, _, _ = run(_measure(workload))
        _all_answered(result)
        samples = result.collector.to_sample_set()
        assert len(samples) == RATE
        assert (samples.latency > 0).all()
        assert set(samples.msg_type) == {workload.value}

    def test_packet_out(self):
        result, switch, _ = run(_measure(Workload.PACKET_OUT))
        _all_answered(result)
        assert switch.counters.packet_out_received == RATE
        assert result.dataplane.matched == RATE

    def test_packet_in(self):
        result, switch, _ = run(_measure(Workload.PACKET_IN))
        _all_answered(result)
        assert result.achieved[1].emitted == RATE
        assert switch.counters.packet_in_sent == RATE

    def test_shared_switch_filters_foreign_tags(self):
        result, _, _ = run(_measure(Workload.PACKET_IN, tenants=2))
        _all_answered(result)
        # every controller sees every PACKET_IN and drops the other tenant's half
        assert result.tables[1].foreign == result.tables[2].sent
        assert result.tables[2].foreign == result.tables[1].sent

    def test_nodelay(self):
        result, _, _ = run(_measure(Workload.ECHO, nodelay=True))
        _all_answered(result)


class TestThroughProxy:
    @pytest.mark.parametrize("mode", ["fv", "ovx"])
    def test_packet_in(self, mode):
        result, _, proxy = run(_measure(Workload.PACKET_IN, tenants=3, hypervisor=mode))
        _all_answered(result)
        assert sum(t.sent for t in result.tables.values()) == RATE
        assert all(t.foreign == 0 for t in result.tables.values())
        assert proxy.counters.no_matching_slice == 0
        assert proxy.counters.no_matching_tenant == 0

    @pytest.mark.parametrize("mode", ["fv", "ovx"])
    def test_packet_out(self, mode):
        result, switch, _ = run(_measure(Workload.PACKET_OUT, tenants=2, hypervisor=mode))
        _all_answered(result)
        assert switch.counters.packet_out_received == RATE

    def test_fv_port_stats_reach_switch(self):
        result, switch, _ = run(_measure(Workload.PORT_STATS, hypervisor="fv"))
        _all_answered(result)
        assert switch.counters.stats_requests == RATE

    def test_ovx_port_stats_served_from_cache(self):
        result, switch, proxy = run(_measure(Workload.PORT_STATS, hypervisor="ovx"))
        _all_answered(result)
        assert proxy.counters.stats_served_from_cache == RATE
        assert switch.counters.stats_requests <= proxy.counters.stats_polls_sent

    def test_ovx_stats_latency_independent_of_switch_capacity(self):
        # 10 ms per request at the switch; the cache answers without waiting on it
        result, switch, proxy = run(_measure(
            Workload.PORT_STATS, hypervisor="ovx", rate=1000, stats_capacity=100.0))
        _all_answered(result)
        latency = result.collector.to_sample_set().latency
        assert np.median(latency) < 5 * NS_PER_MS
        assert proxy.counters.stats_served_from_cache == 1000
        assert switch.counters.stats_requests <= proxy.counters.stats_polls_sent

    def test_fv_stats_queue_behind_slow_switch(self):
        result, switch, _ = run(_measure(
            Workload.PORT_STATS, hypervisor="fv", rate=RATE, stats_capacity=100.0))
        latency = result.collector.to_sample_set().latency
        # 200 requests against 100/s: the backlog reaches the second half of the run
        assert np.median(latency) > 100 * NS_PER_MS
        assert switch.counters.stats_queue_high_water > 10


class TestPhases:
    def test_seeded(self):
        assert phase_offsets(5, seed=1) == phase_offsets(5, seed=1)
        assert phase_offsets(5, seed=1, run_id=0) != phase_offsets(5, seed=1, run_id=1)
        assert all(0 <= p < 1_000_000 for p in phase_offsets(20, seed=3))

    def test_split_rate(self):
        assert split_rate(40000, 20) == [2000] * 20
        assert split_rate(10, 3) == [4, 3, 3]
        assert sum(split_rate(60001, 7)) == 60001
