"""Measurement phase of one run: tenant controllers plus the data plane.

The switch and, if any, the hypervisor proxy are already listening. All
tenants connect first; the run clock's epoch is then reset so that send
timestamps count from the start of emission. After the emission phase a
grace period lets in-flight replies arrive, and whatever is still pending
is expired as lost.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import TenantConfig, TenantController, TenantStatus, Workload, split_rate
from .dataplane import DataPlane, DataPlaneCounters
from .metrics import SampleCollector
from .probe import PendingTable, RunClock
from .scheduler import AchievedRate, plan
from .slices import identities

log = logging.getLogger("perfbench")


@dataclass
class BenchConfig:
    workload: Workload
    tenants: int
    total_rate: int
    nodelay: bool
    duration: int
    control_host: str
    control_ports: list[int]
    switch_data_addr: tuple[str, int]
    dataplane_addr: tuple[str, int]
    translated: bool = False
    probe_size: int = 64
    seed: int = 0
    run_id: int = 0
    grace: float = 1.0

    def __post_init__(self) -> None:
        if len(self.control_ports) != self.tenants:
            raise ValueError(f"{self.tenants} tenants but {len(self.control_ports)} control ports")


@dataclass
class BenchResult:
    collector: SampleCollector
    tables: dict[int, PendingTable]
    statuses: dict[int, TenantStatus]
    achieved: dict[int, Optional[AchievedRate]] = field(default_factory=dict)
    dataplane: Optional[DataPlaneCounters] = None


def phase_offsets(tenants: int, seed: int, run_id: int = 0) -> list[int]:
    """Per-tenant scheduler phase in ns within one millisecond, fixed by the seed."""
    rng = np.random.default_rng([seed, run_id])
    return [int(x) for x in rng.integers(0, 1_000_000, size=tenants)]


async def run_bench(cfg: BenchConfig) -> BenchResult:
    clock = RunClock()
    collector = SampleCollector()
    idents = identities(cfg.tenants)
    rates = split_rate(cfg.total_rate, cfg.tenants)
    phases = phase_offsets(cfg.tenants, cfg.seed, cfg.run_id)
    tables = {i.tenant_id: PendingTable(i.tenant_id) for i in idents}

    dataplane = DataPlane(
        clock, tables, collector, cfg.switch_data_addr, cfg.dataplane_addr,
        translated=cfg.translated, probe_size=cfg.probe_size, run_id=cfg.run_id,
    )
    await dataplane.start()

    controllers = [
        TenantController(
            TenantConfig(
                tenant_id=ident.tenant_id,
                host=cfg.control_host,
                port=port,
                rate=rate,
                workload=cfg.workload,
                nodelay=cfg.nodelay,
                identity=ident,
                duration=cfg.duration,
                probe_size=cfg.probe_size,
                phase_ns=phase,
            ),
            clock, tables[ident.tenant_id], collector, cfg.run_id,
        )
        for ident, rate, phase, port in zip(idents, rates, phases, cfg.control_ports)
    ]
    result = BenchResult(collector, tables, {c.cfg.tenant_id: c.status for c in controllers})
    try:
        await asyncio.gather(*(c.start() for c in controllers))
        log.info("Run %d: %d tenant(s) connected, %s at %d/s for %ds",
                 cfg.run_id, cfg.tenants, cfg.workload.value, cfg.total_rate, cfg.duration)
        clock.epoch = time.monotonic_ns()

        tasks = [c.run() for c in controllers]
        if cfg.workload is Workload.PACKET_IN:
            tasks += [
                dataplane.run_injector(ident, plan(rate, cfg.duration), phase_ns=phase)
                for ident, rate, phase in zip(idents, rates, phases)
            ]
        outcomes = await asyncio.gather(*tasks)

        if cfg.workload is Workload.PACKET_IN:
            achieved = outcomes[len(controllers):]
        else:
            achieved = outcomes[: len(controllers)]
        result.achieved = {i.tenant_id: a for i, a in zip(idents, achieved)}

        await asyncio.sleep(cfg.grace)
    finally:
        for c in controllers:
            await c.close()
        dataplane.close()
        result.dataplane = dataplane.counters

    now = clock.now()
    lost = sum(t.expire(0, now + 1) for t in tables.values())
    if lost:
        log.warning("Run %d: %d request(s) unanswered after %.1fs grace", cfg.run_id, lost, cfg.grace)
    return result
