"""CPU utilization probe and background sampler."""

from __future__ import annotations

import asyncio
import os
import time

import pytest

from perfbench.cpu import CpuProbe, CpuSampler, sample_cpu
from perfbench.errors import ProcessGone

from .conftest import run

# Above the Linux pid_max ceiling, never a live process
MISSING_PID = 2**22 + 1


class TestCpuProbe:
    def test_missing_process(self):
        with pytest.raises(ProcessGone):
            CpuProbe(MISSING_PID)

    def test_busy_loop_registers(self):
        probe = CpuProbe(os.getpid())
        end = time.monotonic() + 0.3
        while time.monotonic() < end:
            pass
        assert probe.read() > 30.0

    def test_idle_near_zero(self):
        probe = CpuProbe(os.getpid())
        time.sleep(0.3)
        assert probe.read() < 30.0

    def test_zero_elapsed(self):
        probe = CpuProbe(os.getpid(), clock=lambda: 1.0)
        assert probe.read() == 0.0

    def test_sample_series_length(self):
        assert len(sample_cpu(os.getpid(), interval=0.05, count=3)) == 3


class TestCpuSampler:
    def test_collects_while_running(self):
        async def scenario():
            sampler = CpuSampler(os.getpid(), interval=0.05)
            sampler.start()
            await asyncio.sleep(0.3)
            return await sampler.stop(), sampler.gone

        series, gone = run(scenario())
        assert len(series) >= 2
        assert all(v >= 0 for v in series)
        assert not gone

    def test_missing_process_flags_gone(self):
        async def scenario():
            sampler = CpuSampler(MISSING_PID, interval=0.05)
            sampler.start()
            await asyncio.sleep(0.1)
            return await sampler.stop(), sampler.gone

        series, gone = run(scenario())
        assert series == [] and gone
