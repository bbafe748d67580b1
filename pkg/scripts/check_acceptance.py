#!/usr/bin/env python3
"""Evaluate the relative acceptance checks against exported run summaries.

Usage:
    python scripts/check_acceptance.py [results_dir]

Expects the presets to have been run into ``results_dir`` (default
``results/``), e.g. ``perfbench preset t1-pktin``. Checks whose preset has
not been run are reported as SKIP.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from perfbench.metrics import RunReport


def load_point(results: Path, preset: str, label: str) -> list[RunReport]:
    point_dir = results / preset / label
    return [
        RunReport.from_dict(json.loads(p.read_text()))
        for p in sorted(point_dir.glob("run-*-summary.json"))
    ]


def ok_reports(reports: list[RunReport]) -> list[RunReport]:
    return [r for r in reports if r.ok and r.aggregate is not None]


def medians(reports: list[RunReport]) -> np.ndarray:
    return np.array([r.aggregate.median for r in ok_reports(reports)], dtype=np.float64)


def mean_latency(reports: list[RunReport]) -> float:
    good = ok_reports(reports)
    return float(np.mean([r.aggregate.mean for r in good])) if good else float("nan")


def iqr(values: np.ndarray) -> tuple[float, float]:
    return float(np.percentile(values, 25)), float(np.percentile(values, 75))


def report(label: str, passed: bool | None, detail: str) -> bool:
    status = "SKIP" if passed is None else ("OK" if passed else "MISMATCH")
    print(f"  {label:<22} {status:<9} {detail}")
    return passed is not False


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def check_throughput(results: Path) -> bool:
    ok = True
    for preset, label, rate in (
        ("t1-pktin-switch", "packet_in-none-t1-r40000-nd0", 40000),
        ("t4-pktout", "packet_out-fv-t20-r60000-nd1", 60000),
    ):
        good = ok_reports(load_point(results, preset, label))
        if not good:
            ok &= report(f"throughput {rate}", None, f"no runs in {preset}/{label}")
            continue
        # emitted per second over the trimmed window, not matched samples
        achieved = [sum(t.achieved_rate or 0.0 for t in r.tenants.values()) for r in good]
        overruns = sum(t.overruns for r in good for t in r.tenants.values())
        worst = min(achieved)
        ok &= report(f"throughput {rate}", worst >= 0.99 * rate,
                     f"worst run {worst:.0f}/s, {overruns} overruns")
    return ok


def check_overhead(results: Path) -> bool:
    label = "packet_in-{}-t1-r40000-nd0"
    base = medians(load_point(results, "t1-pktin-switch", label.format("none")))
    fv = medians(load_point(results, "t1-pktin", label.format("fv")))
    ovx = medians(load_point(results, "t1-pktin", label.format("ovx")))
    if not (len(base) and len(fv) and len(ovx)):
        return report("hypervisor overhead", None, "t1-pktin and t1-pktin-switch needed")
    ok = report("fv > switch", iqr(fv)[0] > iqr(base)[1],
                f"median {np.median(base) / 1e6:.3f} -> {np.median(fv) / 1e6:.3f} ms")
    ok &= report("ovx > fv", iqr(ovx)[0] > iqr(fv)[1],
                 f"median {np.median(fv) / 1e6:.3f} -> {np.median(ovx) / 1e6:.3f} ms")
    return ok


def check_stats_overload(results: Path) -> bool:
    ok = True
    for mode, limit, relation in (("fv", 10.0, ">="), ("ovx", 2.0, "<=")):
        low = mean_latency(load_point(results, "t2-portstats", f"port_stats-{mode}-t1-r5000-nd0"))
        high_runs = load_point(results, "t2-portstats", f"port_stats-{mode}-t1-r8000-nd0")
        high = mean_latency(high_runs)
        if np.isnan(low) or np.isnan(high):
            ok &= report(f"stats {mode}", None, "t2-portstats needed")
            continue
        ratio = high / low
        passed = ratio >= limit if relation == ">=" else ratio <= limit
        ok &= report(f"stats {mode} 8k/5k", passed, f"ratio {ratio:.1f} (want {relation} {limit:g})")
        if mode == "ovx":
            peak = max(
                (max(r.components.get("switch", {}).get("stats_arrivals_per_second") or [0])
                 for r in high_runs),
                default=0,
            )
            poll = high_runs[0].scenario.get("poll_rate", 1.0) if high_runs else 1.0
            ok &= report("stats ovx shielding", peak <= poll + 1, f"switch saw {peak} req/s")
    return ok


def check_nagle(results: Path) -> bool:
    label = "packet_out-fv-t{}-r60000-nd{}"
    agg2 = mean_latency(load_point(results, "t4-pktout", label.format(2, 0)))
    agg20 = mean_latency(load_point(results, "t4-pktout", label.format(20, 0)))
    nd = [mean_latency(load_point(results, "t4-pktout", label.format(t, 1))) for t in range(2, 21, 2)]
    if np.isnan(agg2) or np.isnan(agg20) or any(np.isnan(nd)):
        return report("nagle", None, "t4-pktout needed")
    ok = report("nagle nodelay=0", agg20 >= 1.5 * agg2, f"t20/t2 = {agg20 / agg2:.2f}")
    spread = (max(nd) - min(nd)) / min(nd)
    ok &= report("nagle nodelay=1", spread <= 0.25, f"spread {spread:.0%}")
    return ok


def check_cpu(results: Path) -> bool:
    def cpu(nd: int) -> float:
        runs = ok_reports(load_point(results, "t4-pktout", f"packet_out-fv-t20-r60000-nd{nd}"))
        samples = [s for r in runs for s in r.cpu_samples]
        return float(np.mean(samples)) if samples else float("nan")

    aggregated, immediate = cpu(0), cpu(1)
    if np.isnan(aggregated) or np.isnan(immediate):
        return report("proxy cpu", None, "t4-pktout needed")
    return report("proxy cpu nd1 > nd0", immediate > aggregated,
                  f"{aggregated:.1f}% -> {immediate:.1f}%")


def check_fairness(results: Path) -> bool:
    missing = 0
    seen = 0
    for summary in results.glob("*/*/run-*-summary.json"):
        r = RunReport.from_dict(json.loads(summary.read_text()))
        if not r.ok or len(r.tenants) < 2:
            continue
        seen += 1
        if r.fairness is None:
            missing += 1
    if not seen:
        return report("fairness", None, "no multi-tenant runs")
    return report("fairness", missing == 0, f"{seen - missing}/{seen} runs carry a Jain index")


def main(argv: list[str]) -> int:
    results = Path(argv[0]) if argv else PROJECT_ROOT / "results"
    if not results.is_dir():
        print(f"No results at {results}", file=sys.stderr)
        return 1
    print(f"Acceptance checks over {results}")
    checks = (check_throughput, check_overhead, check_stats_overload,
              check_nagle, check_cpu, check_fairness)
    ok = all([check(results) for check in checks])
    print("\nAll checks passed" if ok else "\nSome checks FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
