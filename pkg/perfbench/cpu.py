"""Process CPU utilization sampling.

Utilization over an interval is Δ(user + system CPU time) / Δ(wall time)
* 100. Multi-threaded processes can exceed 100.
"""

from __future__ import annotations

import asyncio
import contextlib
import logging
import time
from typing import Callable, Optional

import psutil

from .errors import ProcessGone

log = logging.getLogger("perfbench")


def _cpu_seconds(proc: psutil.Process) -> float:
    times = proc.cpu_times()
    return times.user + times.system


class CpuProbe:
    """Incremental utilization readings for one process."""

    def __init__(self, pid: int, clock: Callable[[], float] = time.monotonic) -> None:
        try:
            self.proc = psutil.Process(pid)
            self._last_cpu = _cpu_seconds(self.proc)
        except psutil.NoSuchProcess as e:
            raise ProcessGone(f"Process {pid} is not running") from e
        self.pid = pid
        self.clock = clock
        self._last_wall = clock()

    def read(self) -> float:
        """Utilization percent since the previous reading."""
        try:
            cpu = _cpu_seconds(self.proc)
        except psutil.NoSuchProcess as e:
            raise ProcessGone(f"Process {self.pid} exited") from e
        wall = self.clock()
        elapsed = wall - self._last_wall
        pct = (cpu - self._last_cpu) / elapsed * 100.0 if elapsed > 0 else 0.0
        self._last_cpu, self._last_wall = cpu, wall
        return pct


def sample_cpu(pid: int, interval: float = 1.0, count: int = 1) -> list[float]:
    """Take ``count`` blocking readings of ``pid``, ``interval`` seconds apart."""
    probe = CpuProbe(pid)
    series = []
    for _ in range(count):
        time.sleep(interval)
        series.append(probe.read())
    return series


class CpuSampler:
    """Background sampler feeding a time series while a run executes."""

    def __init__(self, pid: int, interval: float = 1.0) -> None:
        self.pid = pid
        self.interval = interval
        self.series: list[float] = []
        self.gone = False
        self._task: Optional[asyncio.Task] = None

    def start(self) -> None:
        self._task = asyncio.ensure_future(self._run())

    async def _run(self) -> None:
        try:
            probe = CpuProbe(self.pid)
            while True:
                await asyncio.sleep(self.interval)
                self.series.append(probe.read())
        except ProcessGone as e:
            self.gone = True
            log.warning("CPU sampling stopped: %s", e)

    async def stop(self) -> list[float]:
        if self._task is not None:
            self._task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await self._task
        return self.series
