"""Scenario configuration and the bundled measurement presets.

A scenario file is JSON. Axis fields take a scalar or a list; ``tenants``
also accepts an inclusive range ``{"start": 2, "stop": 20, "step": 2}``.

    {
      "name": "t4-pktout",
      "msg_type": "packet_out",
      "tenants": {"start": 2, "stop": 20, "step": 2},
      "total_rate": 60000,
      "nodelay": [false, true],
      "hypervisor": ["fv", "ovx"],
      "runs": 10, "duration": 30, "trim": 5, "seed": 0
    }

Every combination of the axes (total_rate x tenants x nodelay x hypervisor)
is one run point; each point is executed ``runs`` times.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterator, Union

from .controller import Workload
from .errors import InvalidScenario, ParseError

log = logging.getLogger("perfbench")

HYPERVISORS = ("none", "fv", "ovx")

Axis = Union[int, list]


@dataclass(frozen=True)
class RunPoint:
    """One fully resolved configuration: every axis fixed."""

    msg_type: Workload
    tenants: int
    total_rate: int
    nodelay: bool
    hypervisor: str

    @property
    def label(self) -> str:
        return (f"{self.msg_type.value}-{self.hypervisor}-t{self.tenants}"
                f"-r{self.total_rate}-nd{int(self.nodelay)}")


@dataclass
class Scenario:
    name: str = "custom"
    msg_type: Workload = Workload.PACKET_IN
    tenants: list[int] = field(default_factory=lambda: [1])
    total_rate: list[int] = field(default_factory=lambda: [10000])
    nodelay: list[bool] = field(default_factory=lambda: [False])
    hypervisor: list[str] = field(default_factory=lambda: ["fv"])
    switch_only: bool = False
    runs: int = 10
    duration: int = 30
    trim: float = 5.0
    seed: int = 0
    probe_size: int = 64
    stats_capacity: float = 7500.0
    poll_rate: float = 1.0

    def points(self) -> Iterator[RunPoint]:
        for rate, tenants, nodelay, hv in itertools.product(
            self.total_rate, self.tenants, self.nodelay, self.hypervisor
        ):
            yield RunPoint(self.msg_type, tenants, rate, nodelay, hv)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["msg_type"] = self.msg_type.value
        return data

    def validate(self) -> None:
        problems = _problems(self)
        if problems:
            raise InvalidScenario(problems)

    def override(self, **changes: Any) -> Scenario:
        """Copy with the non-None ``changes`` applied, normalized and validated."""
        changes = {k: v for k, v in changes.items() if v is not None}
        data = self.to_dict()
        data.update(changes)
        if "hypervisor" in changes:
            data["switch_only"] = _as_list(changes["hypervisor"]) == ["none"]
        return scenario_from_dict(data)


def _problems(s: Scenario) -> list[str]:
    problems = []
    if not s.tenants or any(t < 1 for t in s.tenants):
        problems.append(f"tenants: every value must be >= 1, got {s.tenants}")
    if not s.total_rate or any(r < 1 for r in s.total_rate):
        problems.append(f"total_rate: every value must be >= 1, got {s.total_rate}")
    for rate, tenants in itertools.product(s.total_rate, s.tenants):
        if 1 <= rate < tenants:
            problems.append(f"total_rate {rate} cannot be split over {tenants} tenants")
    if not s.nodelay:
        problems.append("nodelay: at least one value required")
    bad_hv = [h for h in s.hypervisor if h not in HYPERVISORS]
    if not s.hypervisor or bad_hv:
        problems.append(f"hypervisor: values must be among {HYPERVISORS}, got {s.hypervisor}")
    if s.switch_only and s.hypervisor != ["none"]:
        problems.append("switch_only requires hypervisor 'none'")
    if not s.switch_only and "none" in s.hypervisor:
        problems.append("hypervisor 'none' requires switch_only")
    if s.runs < 1:
        problems.append(f"runs: must be >= 1, got {s.runs}")
    if s.duration < 1:
        problems.append(f"duration: must be >= 1, got {s.duration}")
    if s.trim < 0 or 2 * s.trim >= s.duration:
        problems.append(f"trim: 2 x {s.trim}s leaves no window in a {s.duration}s run")
    if s.probe_size < 64:
        problems.append(f"probe_size: must be >= 64, got {s.probe_size}")
    if s.stats_capacity <= 0:
        problems.append(f"stats_capacity: must be > 0, got {s.stats_capacity}")
    if s.poll_rate <= 0:
        problems.append(f"poll_rate: must be > 0, got {s.poll_rate}")
    return problems


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _as_list(value: Any) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _tenant_axis(value: Any) -> list[int]:
    if isinstance(value, dict):
        start = value.get("start", 1)
        stop = value["stop"]
        step = value.get("step", 1)
        if step < 1:
            raise ValueError(f"step must be >= 1, got {step}")
        return list(range(start, stop + 1, step))
    return [int(v) for v in _as_list(value)]


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    """Build and validate a Scenario, collecting every field-level problem."""
    known = {f.name for f in fields(Scenario)}
    problems = [f"{key}: unknown field" for key in data if key not in known]
    kwargs: dict[str, Any] = {}

    def convert(key: str, fn) -> None:
        if key not in data:
            return
        try:
            kwargs[key] = fn(data[key])
        except (TypeError, ValueError, KeyError) as e:
            problems.append(f"{key}: {e}")

    convert("name", str)
    convert("msg_type", Workload)
    convert("tenants", _tenant_axis)
    convert("total_rate", lambda v: [int(x) for x in _as_list(v)])
    convert("nodelay", lambda v: [_as_bool(x) for x in _as_list(v)])
    convert("hypervisor", lambda v: [str(x) for x in _as_list(v)])
    convert("switch_only", _as_bool)
    for key in ("runs", "duration", "seed", "probe_size"):
        convert(key, int)
    for key in ("trim", "stats_capacity", "poll_rate"):
        convert(key, float)

    if problems:
        raise InvalidScenario(problems)
    scenario = Scenario(**kwargs)
    scenario.validate()
    return scenario


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if value in (0, 1):
        return bool(value)
    raise ValueError(f"expected a boolean or 0/1, got {value!r}")


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario JSON file. Raises ParseError or InvalidScenario."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise ParseError(f"{path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be an object")
    data.setdefault("name", path.stem)
    return scenario_from_dict(data)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_MULTI_TENANT = {"start": 2, "stop": 20, "step": 2}

PRESETS: dict[str, dict[str, Any]] = {
    # Single tenant PACKET_IN through each hypervisor, 10k-40k/s
    "t1-pktin": {
        "msg_type": "packet_in", "tenants": 1,
        "total_rate": [10000, 20000, 30000, 40000],
        "nodelay": False, "hypervisor": ["fv", "ovx"],
    },
    # Same rates against the bare switch (hypervisor overhead baseline)
    "t1-pktin-switch": {
        "msg_type": "packet_in", "tenants": 1,
        "total_rate": [10000, 20000, 30000, 40000],
        "nodelay": False, "hypervisor": "none", "switch_only": True,
    },
    # Single tenant port stats, 5k-8k/s; the switch overloads at 8k
    "t2-portstats": {
        "msg_type": "port_stats", "tenants": 1,
        "total_rate": [5000, 6000, 7000, 8000],
        "nodelay": False, "hypervisor": ["fv", "ovx"],
    },
    # 2..20 tenants sharing 40k PACKET_IN/s, with and without Nagle
    "t3-pktin": {
        "msg_type": "packet_in", "tenants": _MULTI_TENANT,
        "total_rate": 40000, "nodelay": [False, True], "hypervisor": ["fv", "ovx"],
    },
    "t3-pktin-switch": {
        "msg_type": "packet_in", "tenants": _MULTI_TENANT,
        "total_rate": 40000, "nodelay": [False, True],
        "hypervisor": "none", "switch_only": True,
    },
    # 2..20 tenants sharing 60k PACKET_OUT/s
    "t4-pktout": {
        "msg_type": "packet_out", "tenants": _MULTI_TENANT,
        "total_rate": 60000, "nodelay": [False, True], "hypervisor": ["fv", "ovx"],
    },
}


def preset(name: str) -> Scenario:
    try:
        data = PRESETS[name]
    except KeyError:
        raise ParseError(f"Unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return scenario_from_dict({"name": name, "runs": 10, "duration": 30, "trim": 5, **data})


def describe_presets() -> list[str]:
    lines = []
    for name in PRESETS:
        s = preset(name)
        lines.append(
            f"{name:16s} {s.msg_type.value:10s} tenants={_span(s.tenants)} "
            f"rate={'/'.join(str(r) for r in s.total_rate)} "
            f"nodelay={'/'.join(str(int(n)) for n in s.nodelay)} "
            f"hv={','.join(s.hypervisor)} runs={s.runs} {s.duration}s"
        )
    return lines


def _span(values: list[int]) -> str:
    if len(values) == 1:
        return str(values[0])
    return f"{values[0]}:{values[-1]}"


def with_axis(scenario: Scenario, axis: str, values: list[int]) -> Scenario:
    """Copy of ``scenario`` with one axis replaced."""
    if axis not in ("total_rate", "tenants"):
        raise ValueError(f"Cannot sweep over {axis!r}")
    return replace(scenario, **{axis: list(values)})
