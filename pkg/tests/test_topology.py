from sdnfed.scenario import (
    BUILTIN_SCENARIOS,
    REFERENCE_TOPOLOGY,
    REFERENCE_TOPOLOGY_WEAK,
    parse_scenario,
)
from sdnfed.topology import parse_topology


class TestTopologyParsing:
    def test_reference_triangle_parses(self):
        result = parse_topology(REFERENCE_TOPOLOGY)
        assert result.ok
        topo = result.topology
        assert topo.domains == ["A", "B", "C"]
        assert len(topo.switches) == 6
        assert len(topo.hosts) == 6
        assert len(topo.links) == 6
        assert sum(1 for l in topo.links if l.kind == "peering") == 3

    def test_weak_variant_flags_the_direct_link(self):
        topo = parse_topology(REFERENCE_TOPOLOGY_WEAK).topology
        weak = [l for l in topo.links if l.weak_flag]
        assert len(weak) == 1
        assert weak[0].latency_ms == 50.0

    def test_unknown_switch_reports_line_number(self):
        text = "domain A\nswitch A 0\nlink A.0:1 A.9:1 latency=1 capacity=1\n"
        result = parse_topology(text)
        assert not result.ok
        assert result.diagnostics[0].line == 3
        assert "unknown switch A.9" in result.diagnostics[0].message

    def test_duplicate_host_address(self):
        text = (
            "domain A\nswitch A 0\n"
            "host h1 at A.0:1\nhost h1 at A.0:2\n"
        )
        result = parse_topology(text)
        assert not result.ok
        assert result.diagnostics[0].line == 4
        assert "duplicate host" in result.diagnostics[0].message

    def test_port_conflicts_detected(self):
        text = (
            "domain A\nswitch A 0\nswitch A 1\n"
            "host h1 at A.0:1\n"
            "link A.0:1 A.1:1 latency=1 capacity=1\n"
        )
        result = parse_topology(text)
        assert not result.ok
        assert "already used" in result.diagnostics[0].message

    def test_multiple_errors_collected(self):
        text = "domain A\nswitch A 0\nbogus line\nhost x at A.9:1\n"
        result = parse_topology(text)
        assert len(result.diagnostics) == 2

    def test_link_requires_latency_and_capacity(self):
        text = "domain A\nswitch A 0\nswitch A 1\nlink A.0:1 A.1:1 latency=1\n"
        result = parse_topology(text)
        assert not result.ok and "capacity" in result.diagnostics[0].message

    def test_bad_link_values_rejected(self):
        text = "domain A\nswitch A 0\nswitch A 1\nlink A.0:1 A.1:1 latency=0 capacity=5\n"
        result = parse_topology(text)
        assert not result.ok

    def test_empty_document_rejected(self):
        assert not parse_topology("").ok


class TestScenarioParsing:
    def test_builtins_parse(self):
        for name, (title, text) in BUILTIN_SCENARIOS.items():
            result = parse_scenario(text)
            assert result.ok, (name, result.diagnostics)
            assert result.scenario.duration_ms > 0

    def test_actions_sorted_by_time(self):
        text = (
            "topology builtin:reference\nduration 1000\n"
            "at 500 cut_link A.1:10-C.1:10\n"
            "at 100 cut_link A.0:10-B.0:10\n"
        )
        result = parse_scenario(text)
        assert result.ok
        assert [a.at_ms for a in result.scenario.actions] == [100.0, 500.0]

    def test_unknown_verb_rejected(self):
        text = "topology builtin:reference\nduration 1000\nat 0 explode everything\n"
        result = parse_scenario(text)
        assert not result.ok
        assert "unknown action verb" in result.diagnostics[0].message

    def test_action_entity_validation(self):
        text = "topology builtin:reference\nduration 1000\nat 0 cut_link X.0:1-Y.0:1\n"
        result = parse_scenario(text)
        assert not result.ok and "unknown link" in result.diagnostics[0].message

    def test_flow_actions_require_rate_and_priority(self):
        text = "topology builtin:reference\nduration 1000\nat 0 start_flow f A1 C1\n"
        result = parse_scenario(text)
        assert not result.ok

    def test_missing_topology_reported(self):
        result = parse_scenario("duration 1000\n")
        assert not result.ok

    def test_unresolvable_topology_ref(self):
        result = parse_scenario("topology builtin:nope\nduration 1000\n")
        assert not result.ok
        assert "cannot resolve" in result.diagnostics[0].message
