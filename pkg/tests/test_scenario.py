"""Scenario files, validation and the bundled presets."""

from __future__ import annotations

import json

import pytest

from perfbench.controller import Workload
from perfbench.errors import InvalidScenario, ParseError
from perfbench.scenario import (
    PRESETS,
    Scenario,
    describe_presets,
    load_scenario,
    preset,
    scenario_from_dict,
    with_axis,
)

MULTI = list(range(2, 21, 2))


def _write(tmp_path, data, name="mine.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return path


class TestPresets:
    @pytest.mark.parametrize("name", list(PRESETS))
    def test_defaults(self, name):
        s = preset(name)
        assert (s.runs, s.duration, s.trim) == (10, 30, 5.0)
        assert s.name == name

    def test_single_tenant_packet_in(self):
        s = preset("t1-pktin")
        assert s.msg_type is Workload.PACKET_IN
        assert s.tenants == [1]
        assert s.total_rate == [10000, 20000, 30000, 40000]
        assert s.nodelay == [False]
        assert s.hypervisor == ["fv", "ovx"]
        assert len(list(s.points())) == 8

    def test_switch_baseline(self):
        s = preset("t1-pktin-switch")
        assert s.switch_only and s.hypervisor == ["none"]

    def test_port_stats(self):
        s = preset("t2-portstats")
        assert s.msg_type is Workload.PORT_STATS
        assert s.total_rate == [5000, 6000, 7000, 8000]

    def test_multi_tenant_packet_in(self):
        s = preset("t3-pktin")
        assert s.tenants == MULTI
        assert s.total_rate == [40000]
        assert s.nodelay == [False, True]
        assert len(list(s.points())) == 10 * 2 * 2

    def test_multi_tenant_packet_out(self):
        s = preset("t4-pktout")
        assert s.msg_type is Workload.PACKET_OUT
        assert s.tenants == MULTI and s.total_rate == [60000]

    def test_unknown(self):
        with pytest.raises(ParseError):
            preset("t9")

    def test_listing(self):
        lines = describe_presets()
        assert len(lines) == len(PRESETS)
        assert lines[0].startswith("t1-pktin")


class TestValidation:
    def test_zero_tenants(self):
        with pytest.raises(InvalidScenario):
            scenario_from_dict({"tenants": 0})

    def test_problems_collected(self):
        with pytest.raises(InvalidScenario) as info:
            scenario_from_dict({"tenants": 0, "runs": 0, "hypervisor": "xen"})
        assert len(info.value.problems) == 3

    def test_unknown_field(self):
        with pytest.raises(InvalidScenario) as info:
            scenario_from_dict({"bogus": 1})
        assert info.value.problems == ["bogus: unknown field"]

    def test_rate_below_tenants(self):
        with pytest.raises(InvalidScenario):
            scenario_from_dict({"tenants": 5, "total_rate": 3})

    def test_trim_eats_run(self):
        with pytest.raises(InvalidScenario):
            scenario_from_dict({"duration": 10, "trim": 5})

    def test_none_needs_switch_only(self):
        with pytest.raises(InvalidScenario):
            scenario_from_dict({"hypervisor": "none"})

    def test_bad_msg_type(self):
        with pytest.raises(InvalidScenario):
            scenario_from_dict({"msg_type": "flow_mod"})

    def test_nodelay_as_ints(self):
        assert scenario_from_dict({"nodelay": [0, 1]}).nodelay == [False, True]


class TestFiles:
    def test_range_axis(self, tmp_path):
        path = _write(tmp_path, {
            "msg_type": "packet_out", "tenants": {"start": 2, "stop": 20, "step": 2},
            "total_rate": 60000, "hypervisor": ["fv", "ovx"],
        })
        s = load_scenario(path)
        assert s.tenants == MULTI
        assert s.name == "mine"

    def test_bad_json(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(_write(tmp_path, "{not json"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(tmp_path / "absent.json")

    def test_not_an_object(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(_write(tmp_path, [1, 2]))

    def test_to_dict_reloads(self):
        s = preset("t3-pktin")
        assert scenario_from_dict(s.to_dict()) == s


class TestOverrides:
    def test_override_axes(self):
        s = preset("t1-pktin").override(total_rate=[500], duration=3, trim=1.0, runs=1)
        assert s.total_rate == [500] and s.duration == 3 and s.runs == 1

    def test_override_to_switch(self):
        s = preset("t1-pktin").override(hypervisor=["none"])
        assert s.switch_only and s.hypervisor == ["none"]

    def test_none_values_ignored(self):
        assert preset("t2-portstats").override(seed=None) == preset("t2-portstats")

    def test_invalid_override(self):
        with pytest.raises(InvalidScenario):
            preset("t1-pktin").override(runs=0)

    def test_with_axis(self):
        s = with_axis(Scenario(), "tenants", [1, 2, 4])
        assert s.tenants == [1, 2, 4]
        with pytest.raises(ValueError):
            with_axis(Scenario(), "nodelay", [0])
