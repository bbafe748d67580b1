"""Latency statistics, fairness, and result export.

Samples are held column-wise in numpy arrays. Statistics are computed over
the trimmed steady-state window only: a sample is kept when its send
timestamp lies in [warmup, duration - cooldown).

Percentiles use the nearest-rank definition (no interpolation): the p-th
percentile of n sorted values is the value at rank ceil(p/100 * n).

Export layout per run (prefix ``run-<id>``):
    <prefix>-samples.csv       raw samples, fixed header
    <prefix>-summary.json      RunReport
    <prefix>-hist-t<N>.dat     two-column (bin start in µs, count) per tenant
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyWindow, ExportError, ZeroMean
from .probe import LatencySample

log = logging.getLogger("perfbench")

NS_PER_S = 1_000_000_000
NS_PER_MS = 1_000_000

CSV_HEADER = ("run_id", "tenant_id", "seq", "msg_type", "send_ts_ns", "recv_ts_ns", "latency_ns")


# ---------------------------------------------------------------------------
# Sample storage
# ---------------------------------------------------------------------------

@dataclass
class SampleSet:
    run_id: np.ndarray
    tenant_id: np.ndarray
    seq: np.ndarray
    msg_type: np.ndarray
    send_ts: np.ndarray
    recv_ts: np.ndarray

    @classmethod
    def empty(cls) -> SampleSet:
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, np.zeros(0, dtype=object), z, z)

    @classmethod
    def from_samples(cls, samples: Sequence[LatencySample]) -> SampleSet:
        if not samples:
            return cls.empty()
        return cls(
            np.fromiter((s.run_id for s in samples), np.int64, len(samples)),
            np.fromiter((s.tenant_id for s in samples), np.int64, len(samples)),
            np.fromiter((s.seq for s in samples), np.int64, len(samples)),
            np.array([s.msg_type for s in samples], dtype=object),
            np.fromiter((s.send_ts for s in samples), np.int64, len(samples)),
            np.fromiter((s.recv_ts for s in samples), np.int64, len(samples)),
        )

    def __len__(self) -> int:
        return len(self.send_ts)

    @property
    def latency(self) -> np.ndarray:
        return self.recv_ts - self.send_ts

    def select(self, mask: np.ndarray) -> SampleSet:
        return SampleSet(
            self.run_id[mask], self.tenant_id[mask], self.seq[mask],
            self.msg_type[mask], self.send_ts[mask], self.recv_ts[mask],
        )

    def tenants(self) -> list[int]:
        return [int(t) for t in np.unique(self.tenant_id)]

    def for_tenant(self, tenant_id: int) -> SampleSet:
        return self.select(self.tenant_id == tenant_id)


class SampleCollector:
    """Sink for LatencySamples from every tenant actor."""

    def __init__(self) -> None:
        self.samples: list[LatencySample] = []

    def __call__(self, sample: LatencySample) -> None:
        self.samples.append(sample)

    def __len__(self) -> int:
        return len(self.samples)

    def to_sample_set(self) -> SampleSet:
        return SampleSet.from_samples(self.samples)


# ---------------------------------------------------------------------------
# Trimming and statistics
# ---------------------------------------------------------------------------

def trim(samples: SampleSet, warmup: float, cooldown: float, duration: float) -> SampleSet:
    """Keep samples sent in [warmup, duration - cooldown), all in seconds."""
    if warmup < 0 or cooldown < 0 or warmup + cooldown >= duration:
        raise ValueError(
            f"Trim window empty: warmup={warmup} cooldown={cooldown} duration={duration}"
        )
    lo = int(round(warmup * NS_PER_S))
    hi = int(round((duration - cooldown) * NS_PER_S))
    mask = (samples.send_ts >= lo) & (samples.send_ts < hi)
    kept = samples.select(mask)
    if len(kept) == 0:
        raise EmptyWindow(f"No samples sent in [{warmup}s, {duration - cooldown}s)")
    return kept


def window_rate(per_second: list[int], window: tuple[float, float]) -> Optional[float]:
    """Mean emissions per second over the whole seconds inside ``window``."""
    lo, hi = math.ceil(window[0]), min(math.floor(window[1]), len(per_second))
    if hi <= lo:
        return None
    return float(np.mean(per_second[lo:hi]))


def nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


@dataclass
class LatencyStats:
    """Latency statistics in nanoseconds."""

    count: int
    mean: float
    median: float
    p95: float
    p99: float
    max: float

    @classmethod
    def of(cls, latencies: np.ndarray) -> LatencyStats:
        if len(latencies) == 0:
            raise EmptyWindow("No samples to summarize")
        ordered = np.sort(latencies)
        return cls(
            count=int(len(ordered)),
            mean=float(ordered.mean()),
            median=nearest_rank(ordered, 50),
            p95=nearest_rank(ordered, 95),
            p99=nearest_rank(ordered, 99),
            max=float(ordered[-1]),
        )

    def in_ms(self) -> dict[str, float]:
        return {k: v / NS_PER_MS for k, v in asdict(self).items() if k != "count"}


@dataclass
class Summary:
    per_tenant: dict[int, LatencyStats]
    aggregate: LatencyStats

    @property
    def mean_of_means(self) -> float:
        return float(np.mean([s.mean for s in self.per_tenant.values()]))


def summarize(samples: SampleSet) -> Summary:
    """Per-tenant and aggregate statistics of a (trimmed) sample set."""
    per_tenant = {t: LatencyStats.of(samples.for_tenant(t).latency) for t in samples.tenants()}
    return Summary(per_tenant, LatencyStats.of(samples.latency))


@dataclass
class Fairness:
    jain: float
    max_min_ratio: float


def fairness(per_tenant_means: Iterable[float]) -> Fairness:
    """Jain index (sum x)^2 / (n * sum x^2) and max/min ratio of tenant means."""
    x = np.asarray(list(per_tenant_means), dtype=np.float64)
    if len(x) < 2:
        raise ValueError(f"Fairness needs at least 2 tenants, got {len(x)}")
    if np.any(x <= 0):
        raise ZeroMean(f"Tenant mean latency must be > 0: {x.tolist()}")
    jain = float(x.sum() ** 2 / (len(x) * np.square(x).sum()))
    return Fairness(jain=min(jain, 1.0), max_min_ratio=float(x.max() / x.min()))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class TenantReport:
    """One tenant's share of a run.

    ``achieved_rate`` is what the generator actually emitted per second over
    the trimmed window, ``matched_rate`` what came back as samples in it.
    """

    tenant_id: int
    stats: Optional[LatencyStats]
    achieved_rate: Optional[float] = None
    matched_rate: Optional[float] = None
    sent: int = 0
    matched: int = 0
    lost: int = 0
    planned: int = 0
    emitted: int = 0
    per_second: list[int] = field(default_factory=list)
    overruns: int = 0
    max_lag_ns: int = 0


@dataclass
class RunReport:
    scenario: dict[str, Any]
    run_id: int
    status: str = "ok"
    error: Optional[str] = None
    window: tuple[float, float] = (0.0, 0.0)
    tenants: dict[int, TenantReport] = field(default_factory=dict)
    aggregate: Optional[LatencyStats] = None
    mean_of_means: Optional[float] = None
    fairness: Optional[Fairness] = None
    cpu_samples: list[float] = field(default_factory=list)
    components: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["tenants"] = {str(k): v for k, v in data["tenants"].items()}
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunReport:
        tenants = {}
        for key, t in data.get("tenants", {}).items():
            stats = LatencyStats(**t["stats"]) if t.get("stats") else None
            tenants[int(key)] = TenantReport(**{**t, "stats": stats})
        agg = data.get("aggregate")
        fair = data.get("fairness")
        return cls(
            scenario=data["scenario"],
            run_id=data["run_id"],
            status=data.get("status", "ok"),
            error=data.get("error"),
            window=tuple(data.get("window", (0.0, 0.0))),
            tenants=tenants,
            aggregate=LatencyStats(**agg) if agg else None,
            mean_of_means=data.get("mean_of_means"),
            fairness=Fairness(**fair) if fair else None,
            cpu_samples=list(data.get("cpu_samples", [])),
            components=dict(data.get("components", {})),
        )


def build_report(
    scenario: dict[str, Any],
    run_id: int,
    samples: SampleSet,
    *,
    warmup: float,
    cooldown: float,
    duration: float,
) -> RunReport:
    """Trim ``samples`` and fill a RunReport with per-tenant and aggregate statistics."""
    report = RunReport(scenario=scenario, run_id=run_id, window=(warmup, duration - cooldown))
    window = trim(samples, warmup, cooldown, duration)
    summary = summarize(window)
    seconds = duration - warmup - cooldown
    for tenant_id, stats in summary.per_tenant.items():
        report.tenants[tenant_id] = TenantReport(
            tenant_id, stats, matched_rate=stats.count / seconds, matched=stats.count,
        )
    report.aggregate = summary.aggregate
    report.mean_of_means = summary.mean_of_means
    if len(summary.per_tenant) >= 2:
        try:
            report.fairness = fairness(s.mean for s in summary.per_tenant.values())
        except ZeroMean as e:
            log.warning("Fairness skipped: %s", e)
    return report


@dataclass
class Across:
    """Statistics over several runs of one configuration."""

    runs: int
    failed: int
    pooled_mean: Optional[float]
    mean_of_means: Optional[float]
    mean_jain: Optional[float]


def across_runs(reports: Sequence[RunReport]) -> Across:
    good = [r for r in reports if r.ok and r.aggregate is not None]
    if not good:
        return Across(len(reports), len(reports), None, None, None)
    counts = np.array([r.aggregate.count for r in good], dtype=np.float64)
    means = np.array([r.aggregate.mean for r in good], dtype=np.float64)
    jains = [r.fairness.jain for r in good if r.fairness is not None]
    return Across(
        runs=len(reports),
        failed=len(reports) - len(good),
        pooled_mean=float((counts * means).sum() / counts.sum()),
        mean_of_means=float(means.mean()),
        mean_jain=float(np.mean(jains)) if jains else None,
    )


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def write_samples_csv(samples: SampleSet, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        latency = samples.latency
        for i in range(len(samples)):
            writer.writerow((
                int(samples.run_id[i]), int(samples.tenant_id[i]), int(samples.seq[i]),
                samples.msg_type[i], int(samples.send_ts[i]), int(samples.recv_ts[i]),
                int(latency[i]),
            ))


def load_samples(path: str | Path) -> SampleSet:
    """Read a samples CSV written by ``export``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        rows = list(reader)
    return SampleSet.from_samples([
        LatencySample(int(r[0]), int(r[1]), int(r[2]), r[3], int(r[4]), int(r[5]))
        for r in rows
    ])


def write_histograms(samples: SampleSet, out_dir: Path, prefix: str, bins: int = 100) -> list[Path]:
    paths: list[Path] = []
    for tenant_id in samples.tenants():
        latency_us = samples.for_tenant(tenant_id).latency / 1000.0
        counts, edges = np.histogram(latency_us, bins=bins)
        path = out_dir / f"{prefix}-hist-t{tenant_id}.dat"
        np.savetxt(path, np.column_stack((edges[:-1], counts)), fmt=("%.3f", "%d"),
                   header="bin_start_us count")
        paths.append(path)
    return paths


def export(report: RunReport, samples: SampleSet, out_dir: str | Path) -> list[Path]:
    """Write samples CSV, summary JSON, and per-tenant histograms for one run."""
    out = Path(out_dir)
    prefix = f"run-{report.run_id}"
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{prefix}-samples.csv"
        write_samples_csv(samples, csv_path)
        summary_path = out / f"{prefix}-summary.json"
        summary_path.write_text(json.dumps(report.to_dict(), indent=2, default=str))
        paths = [csv_path, summary_path]
        if len(samples):
            paths += write_histograms(samples, out, prefix)
    except OSError as e:
        raise ExportError(f"Export to {out} failed: {e}") from e
    log.debug("Exported %d samples to %s", len(samples), out)
    return paths
