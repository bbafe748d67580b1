"""Scenario orchestration.

For every run point and repetition:

    1. launch the switch emulator process
    2. launch the hypervisor proxy process (unless switch-only)
    3. run the measurement phase in-process (tenant controllers + data plane)
    4. stop the components (SIGTERM), collect their counters
    5. trim, summarize, export

Component processes are ``python -m perfbench switch|proxy --config JSON``;
each prints ``READY`` on stdout once it is listening. A failed run is
recorded in its RunReport and the remaining runs proceed.
"""

from __future__ import annotations

import asyncio
import json
import logging
import random
import socket
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .bench import BenchConfig, BenchResult, run_bench
from .cpu import CpuSampler
from .errors import ComponentLaunchFailed, EmptyWindow, PerfbenchError
from .hypervisor.proxy import ProxyConfig
from .metrics import (
    Across,
    RunReport,
    SampleSet,
    TenantReport,
    across_runs,
    build_report,
    export,
    window_rate,
)
from .scenario import RunPoint, Scenario, with_axis
from .switch import SwitchConfig

log = logging.getLogger("perfbench")

LOOPBACK = "127.0.0.1"
READY = b"READY"


@dataclass
class RunnerOptions:
    out_dir: Path = Path("results")
    python: str = sys.executable
    launch_timeout: float = 10.0
    stop_timeout: float = 10.0
    cpu_interval: float = 1.0


# ---------------------------------------------------------------------------
# Ports
# ---------------------------------------------------------------------------

def _bindable(port: int, kind: int) -> bool:
    with socket.socket(socket.AF_INET, kind) as s:
        try:
            s.bind((LOOPBACK, port))
        except OSError:
            return False
    return True


def free_port(kind: int = socket.SOCK_STREAM) -> int:
    with socket.socket(socket.AF_INET, kind) as s:
        s.bind((LOOPBACK, 0))
        return s.getsockname()[1]


def free_port_block(count: int, lo: int = 40000, hi: int = 60000, attempts: int = 200) -> int:
    """Base port b such that b+1 .. b+count are all free for TCP."""
    for _ in range(attempts):
        base = random.randrange(lo, hi - count - 1)
        if all(_bindable(base + i, socket.SOCK_STREAM) for i in range(1, count + 1)):
            return base
    raise ComponentLaunchFailed(f"No block of {count} free TCP ports in {lo}-{hi}")


# ---------------------------------------------------------------------------
# Component processes
# ---------------------------------------------------------------------------

class Component:
    """A switch or proxy child process."""

    def __init__(self, kind: str, config: Any, counters_path: Path) -> None:
        self.kind = kind
        self.config = config
        self.counters_path = counters_path
        self.proc: Optional[asyncio.subprocess.Process] = None

    @property
    def pid(self) -> int:
        assert self.proc is not None
        return self.proc.pid

    async def launch(self, opts: RunnerOptions) -> None:
        payload = json.dumps(asdict(self.config))
        try:
            self.proc = await asyncio.create_subprocess_exec(
                opts.python, "-m", "perfbench", self.kind, "--config", payload,
                stdout=asyncio.subprocess.PIPE,
            )
        except OSError as e:
            raise ComponentLaunchFailed(f"{self.kind}: cannot start process: {e}") from e
        try:
            line = await asyncio.wait_for(self.proc.stdout.readline(), opts.launch_timeout)
        except asyncio.TimeoutError:
            line = b""
        if not line.startswith(READY):
            await self.stop(opts)
            raise ComponentLaunchFailed(
                f"{self.kind} did not become ready (exit code {self.proc.returncode})"
            )
        log.debug("%s ready (pid %d)", self.kind, self.proc.pid)

    async def stop(self, opts: RunnerOptions) -> dict[str, Any]:
        proc = self.proc
        if proc is None:
            return {}
        if proc.returncode is None:
            proc.terminate()
            try:
                await asyncio.wait_for(proc.wait(), opts.stop_timeout)
            except asyncio.TimeoutError:
                log.warning("%s did not stop, killing pid %d", self.kind, proc.pid)
                proc.kill()
                await proc.wait()
        try:
            return json.loads(self.counters_path.read_text())
        except (OSError, ValueError):
            log.warning("%s left no counters at %s", self.kind, self.counters_path)
            return {}


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

async def run_once(
    scenario: Scenario, point: RunPoint, run_id: int, opts: RunnerOptions
) -> RunReport:
    """Execute one repetition of ``point`` and return its report."""
    out_dir = opts.out_dir / scenario.name / point.label
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance = {**scenario.to_dict(), "point": {**asdict(point), "msg_type": point.msg_type.value}}

    report = RunReport(
        scenario=provenance, run_id=run_id,
        window=(scenario.trim, scenario.duration - scenario.trim),
    )
    components: dict[str, Any] = {}
    switch: Optional[Component] = None
    proxy: Optional[Component] = None
    sampler: Optional[CpuSampler] = None
    result: Optional[BenchResult] = None
    try:
        switch, proxy, bench_cfg = _components(scenario, point, run_id, out_dir)
        await switch.launch(opts)
        if proxy is not None:
            await proxy.launch(opts)
        sampler = CpuSampler((proxy or switch).pid, opts.cpu_interval)
        sampler.start()
        result = await run_bench(bench_cfg)
    except ComponentLaunchFailed as e:
        report.status, report.error = "launch_failed", str(e)
        log.error("Run %d of %s: %s", run_id, point.label, e)
    except PerfbenchError as e:
        report.status, report.error = "failed", str(e)
        log.error("Run %d of %s failed: %s", run_id, point.label, e)
    finally:
        cpu = await sampler.stop() if sampler is not None else []
        if proxy is not None:
            components["proxy"] = await proxy.stop(opts)
        if switch is not None:
            components["switch"] = await switch.stop(opts)

    samples = SampleSet.empty()
    if result is not None:
        samples = result.collector.to_sample_set()
        try:
            report = build_report(
                provenance, run_id, samples,
                warmup=scenario.trim, cooldown=scenario.trim, duration=scenario.duration,
            )
        except EmptyWindow as e:
            report.status, report.error = "failed", str(e)
            log.error("Run %d of %s: %s", run_id, point.label, e)
    report.cpu_samples = cpu
    report.components = components
    if result is not None:
        _fill_tenants(report, result)
    export(report, samples, out_dir)
    return report


def _components(
    scenario: Scenario, point: RunPoint, run_id: int, out_dir: Path
) -> tuple[Component, Optional[Component], BenchConfig]:
    """Allocate ports and build the switch, optional proxy and bench configs."""
    switch_cfg = SwitchConfig(
        control_port=free_port(),
        datapath_id=1,
        data_port=free_port(socket.SOCK_DGRAM),
        data_peer_port=free_port(socket.SOCK_DGRAM),
        stats_capacity=scenario.stats_capacity,
        counters_path=str(out_dir / f"run-{run_id}-switch.json"),
    )
    switch = Component("switch", switch_cfg, Path(switch_cfg.counters_path))
    proxy: Optional[Component] = None
    if point.hypervisor == "none":
        control_ports = [switch_cfg.control_port] * point.tenants
    else:
        proxy_cfg = ProxyConfig(
            mode=point.hypervisor,
            tenants=point.tenants,
            switch_port=switch_cfg.control_port,
            listen_port_base=free_port_block(point.tenants),
            poll_rate=scenario.poll_rate,
            counters_path=str(out_dir / f"run-{run_id}-proxy.json"),
        )
        proxy = Component("proxy", proxy_cfg, Path(proxy_cfg.counters_path))
        control_ports = [proxy_cfg.listen_port(t) for t in range(1, point.tenants + 1)]

    bench_cfg = BenchConfig(
        workload=point.msg_type,
        tenants=point.tenants,
        total_rate=point.total_rate,
        nodelay=point.nodelay,
        duration=scenario.duration,
        control_host=LOOPBACK,
        control_ports=control_ports,
        switch_data_addr=(LOOPBACK, switch_cfg.data_port),
        dataplane_addr=(LOOPBACK, switch_cfg.data_peer_port),
        translated=point.hypervisor == "ovx",
        probe_size=scenario.probe_size,
        seed=scenario.seed,
        run_id=run_id,
    )
    return switch, proxy, bench_cfg


def _fill_tenants(report: RunReport, result: BenchResult) -> None:
    for tenant_id, table in result.tables.items():
        entry = report.tenants.setdefault(tenant_id, TenantReport(tenant_id, None))
        entry.sent = table.sent
        entry.matched = table.matched
        entry.lost = table.expired
        achieved = result.achieved.get(tenant_id)
        if achieved is not None:
            entry.planned = achieved.planned
            entry.emitted = achieved.emitted
            entry.per_second = list(achieved.per_second)
            entry.overruns = achieved.overruns
            entry.max_lag_ns = achieved.max_lag_ns
            entry.achieved_rate = window_rate(entry.per_second, report.window)
            if entry.achieved_rate is None:
                entry.achieved_rate = achieved.mean_rate
        status = result.statuses.get(tenant_id)
        if status is not None and status.failure:
            report.status = "failed"
            report.error = f"tenant {tenant_id}: {status.failure}"
    if result.dataplane is not None:
        report.components["dataplane"] = asdict(result.dataplane)


@dataclass
class PointResult:
    point: RunPoint
    reports: list[RunReport]
    across: Across


@dataclass
class ScenarioResult:
    scenario: Scenario
    points: list[PointResult] = field(default_factory=list)

    @property
    def reports(self) -> list[RunReport]:
        return [r for p in self.points for r in p.reports]

    @property
    def launch_failed(self) -> bool:
        return any(r.status == "launch_failed" for r in self.reports)

    @property
    def failed(self) -> bool:
        return any(not r.ok for r in self.reports)


async def run_scenario_async(scenario: Scenario, opts: RunnerOptions) -> ScenarioResult:
    result = ScenarioResult(scenario)
    for point in scenario.points():
        log.info("%s: %s (%d runs)", scenario.name, point.label, scenario.runs)
        reports = [await run_once(scenario, point, run_id, opts) for run_id in range(scenario.runs)]
        across = across_runs(reports)
        result.points.append(PointResult(point, reports, across))
        if across.pooled_mean is not None:
            log.info("%s: pooled mean %.3f ms, mean of means %.3f ms, %d/%d runs failed",
                     point.label, across.pooled_mean / 1e6, across.mean_of_means / 1e6,
                     across.failed, across.runs)
    _write_index(result, opts.out_dir / scenario.name)
    return result


def run_scenario(scenario: Scenario, opts: Optional[RunnerOptions] = None) -> ScenarioResult:
    return asyncio.run(run_scenario_async(scenario, opts or RunnerOptions()))


def _write_index(result: ScenarioResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {
        "scenario": result.scenario.to_dict(),
        "points": [
            {"label": p.point.label, **asdict(p.across)} for p in result.points
        ],
    }
    (out_dir / "index.json").write_text(json.dumps(index, indent=2))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class ReportMatrix:
    """Across-run statistics indexed by (fixed-axes label, swept value)."""

    axis: str
    values: list[int]
    cells: dict[str, dict[int, Across]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "axis": self.axis,
            "values": self.values,
            "cells": {row: {str(v): asdict(a) for v, a in cols.items()}
                      for row, cols in self.cells.items()},
        }


def _row_label(point: RunPoint, axis: str) -> str:
    parts = {
        "msg_type": point.msg_type.value,
        "hypervisor": point.hypervisor,
        "nodelay": f"nd{int(point.nodelay)}",
        "tenants": f"t{point.tenants}",
        "total_rate": f"r{point.total_rate}",
    }
    parts.pop(axis)
    return "-".join(parts.values())


def sweep(
    scenario: Scenario, axis: str, values: Optional[list[int]] = None,
    opts: Optional[RunnerOptions] = None,
) -> tuple[ReportMatrix, list[ScenarioResult]]:
    """Run ``scenario`` once per value of ``axis`` ('rate' or 'tenants').

    For the tenant axis the total rate stays constant and is split evenly.
    """
    field_name = {"rate": "total_rate", "tenants": "tenants"}.get(axis)
    if field_name is None:
        raise ValueError(f"Sweep axis must be 'rate' or 'tenants', got {axis!r}")
    opts = opts or RunnerOptions()
    values = list(values or getattr(scenario, field_name))
    matrix = ReportMatrix(field_name, values)
    results = []
    for value in values:
        result = run_scenario(with_axis(scenario, field_name, [value]), opts)
        results.append(result)
        for p in result.points:
            matrix.cells.setdefault(_row_label(p.point, field_name), {})[value] = p.across
    out = opts.out_dir / scenario.name
    # one index for the whole sweep, replacing the per-value ones
    combined = ScenarioResult(with_axis(scenario, field_name, values),
                              [p for r in results for p in r.points])
    _write_index(combined, out)
    (out / f"sweep-{field_name}.json").write_text(json.dumps(matrix.to_dict(), indent=2))
    return matrix, results
