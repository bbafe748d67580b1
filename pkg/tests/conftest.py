from __future__ import annotations

import asyncio

import pytest

from perfbench.probe import LatencySample
from perfbench.slices import TenantIdentity, identities

LOOPBACK = "127.0.0.1"


def run(coro, timeout: float = 30.0):
    """Run ``coro`` on a fresh event loop with an overall timeout."""
    return asyncio.run(asyncio.wait_for(coro, timeout))


def make_samples(latencies_ns: dict[int, list[int]], start_ns: int = 0, spacing_ns: int = 1_000_000) -> list[LatencySample]:
    """One sample per latency, sent ``spacing_ns`` apart, per tenant."""
    out = []
    for tenant_id, lats in latencies_ns.items():
        for seq, lat in enumerate(lats):
            send = start_ns + seq * spacing_ns
            out.append(LatencySample(0, tenant_id, seq, "packet_in", send, send + lat))
    return out


@pytest.fixture
def tenant_one() -> TenantIdentity:
    return identities(1)[0]


@pytest.fixture
def three_tenants() -> list[TenantIdentity]:
    return identities(3)
