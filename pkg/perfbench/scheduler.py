"""Constant-rate emission scheduling at millisecond precision.

A rate of R messages/s is spread over the 1000 millisecond buckets of each
second by error accumulation, so bucket i receives

    floor((i + 1) * R / 1000) - floor(i * R / 1000)

messages. Every full second sums to exactly R and bucket counts within a
second differ by at most one.

When the event loop falls behind, late buckets are emitted immediately
(catch-up) instead of being dropped, so the total always equals the plan.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from typing import Awaitable, Callable, Optional

import numpy as np

log = logging.getLogger("perfbench")

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


@dataclass
class RatePlan:
    total_rate: int
    duration: int
    buckets: np.ndarray  # per-millisecond emission counts over the whole run

    @property
    def total(self) -> int:
        return int(self.buckets.sum())

    def per_second(self) -> np.ndarray:
        return self.buckets.reshape(self.duration, 1000).sum(axis=1)


@dataclass
class AchievedRate:
    planned: int
    emitted: int = 0
    per_second: list[int] = field(default_factory=list)
    max_lag_ns: int = 0
    overruns: int = 0
    elapsed_ns: int = 0

    @property
    def mean_rate(self) -> float:
        if self.elapsed_ns <= 0:
            return 0.0
        return self.emitted * NS_PER_S / self.elapsed_ns


def plan(rate: int, duration: int) -> RatePlan:
    """Build the per-millisecond emission plan for ``rate`` msgs/s over ``duration`` s."""
    if rate < 1:
        raise ValueError(f"rate must be >= 1, got {rate}")
    if duration < 1:
        raise ValueError(f"duration must be >= 1, got {duration}")
    i = np.arange(duration * 1000, dtype=np.int64)
    buckets = ((i + 1) * rate) // 1000 - (i * rate) // 1000
    return RatePlan(total_rate=rate, duration=duration, buckets=buckets)


async def run_clocked(
    rate_plan: RatePlan,
    emit: Callable[[], object],
    *,
    flush: Optional[Callable[[], Awaitable[object]]] = None,
    overrun_ms: float = 10.0,
    phase_ns: int = 0,
    clock: Callable[[], int] = time.monotonic_ns,
) -> AchievedRate:
    """Emit ``rate_plan`` by calling ``emit()`` once per message.

    ``flush`` is awaited after every non-empty bucket (e.g. a stream drain).
    ``phase_ns`` delays the first bucket boundary.
    """
    buckets = rate_plan.buckets.tolist()
    achieved = AchievedRate(planned=rate_plan.total, per_second=[0] * rate_plan.duration)
    overrun_ns = int(overrun_ms * NS_PER_MS)
    start = clock() + phase_ns
    warned_second = -1

    for i, count in enumerate(buckets):
        if not count:
            continue
        target = start + i * NS_PER_MS
        now = clock()
        if now < target:
            await asyncio.sleep((target - now) / NS_PER_S)
            now = clock()
        lag = now - target
        if lag > achieved.max_lag_ns:
            achieved.max_lag_ns = lag
        if lag > overrun_ns:
            achieved.overruns += 1
            second = i // 1000
            if second != warned_second:
                warned_second = second
                log.warning("Scheduler overrun: bucket %d emitted %.1f ms late", i, lag / NS_PER_MS)
        for _ in range(count):
            emit()
        achieved.emitted += count
        second = min((clock() - start) // NS_PER_S, rate_plan.duration - 1)
        achieved.per_second[max(second, 0)] += count
        if flush is not None:
            await flush()
        elif lag > 0:
            # Catching up: still yield so other tenants' schedulers run
            await asyncio.sleep(0)

    achieved.elapsed_ns = max(clock() - start, 1)
    return achieved
