"""Rate plans and the clocked emitter."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfbench.scheduler import NS_PER_MS, plan, run_clocked

from .conftest import run


class TestPlan:
    @given(st.integers(1, 200_000), st.integers(1, 5))
    def test_every_second_sums_to_rate(self, rate, duration):
        p = plan(rate, duration)
        assert len(p.buckets) == duration * 1000
        assert np.all(p.per_second() == rate)
        assert p.total == rate * duration

    @given(st.integers(1, 200_000))
    def test_buckets_differ_by_at_most_one(self, rate):
        b = plan(rate, 1).buckets
        assert b.max() - b.min() <= 1

    def test_40k_is_40_per_ms(self):
        assert set(plan(40000, 1).buckets.tolist()) == {40}

    def test_sub_khz_rate_spreads_out(self):
        b = plan(500, 1).buckets
        assert b.sum() == 500
        assert set(b.tolist()) == {0, 1}

    @pytest.mark.parametrize("rate,duration", [(0, 1), (-5, 1), (10, 0)])
    def test_rejects_bad_input(self, rate, duration):
        with pytest.raises(ValueError):
            plan(rate, duration)


class FakeClock:
    """Monotonic ns clock advanced only by the scheduler's sleeps."""

    def __init__(self) -> None:
        self.now = 0

    def __call__(self) -> int:
        return self.now


class TestRunClocked:
    def test_emits_exact_total(self):
        emitted = []
        achieved = run(run_clocked(plan(2000, 1), lambda: emitted.append(1)))
        assert len(emitted) == 2000
        assert achieved.emitted == 2000
        assert sum(achieved.per_second) == 2000

    def test_overrun_catches_up(self):
        clock = FakeClock()

        def slow_emit():
            # 20 ms per message against a 10 ms interval
            clock.now += 20 * NS_PER_MS

        achieved = run(run_clocked(plan(100, 1), slow_emit, clock=clock))
        assert achieved.emitted == 100
        assert achieved.overruns > 0
        assert achieved.max_lag_ns > 10 * NS_PER_MS

    def test_flush_called_per_nonempty_bucket(self):
        flushes = 0

        async def flush():
            nonlocal flushes
            flushes += 1

        run(run_clocked(plan(200, 1), lambda: None, flush=flush))
        assert flushes == 200

    def test_real_clock_rate_within_one_percent(self):
        emitted = []
        achieved = run(run_clocked(plan(1000, 1), lambda: emitted.append(1)))
        assert achieved.emitted == len(emitted) == 1000
        assert achieved.mean_rate == pytest.approx(1000, rel=0.01)

    def test_one_per_second_emits_once(self):
        p = plan(1, 1)
        assert p.buckets.sum() == 1
        emitted = []
        achieved = run(run_clocked(p, lambda: emitted.append(1)))
        assert emitted == [1]
        assert achieved.per_second == [1]
