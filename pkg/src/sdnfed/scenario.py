"""Scenario scripts and the built-in evaluation scenarios.

A scenario references a topology, a duration, and a timed action list:

    topology builtin:reference
    duration 60000
    at <ms> cut_link <endpoint>-<endpoint>
    at <ms> restore_link <endpoint>-<endpoint>
    at <ms> start_flow <id> <src> <dst> rate=<mbps> priority=<n> [max_latency=<ms>] [until=<ms>]
    at <ms> stop_flow <id>
    at <ms> request_service <id> <src> <dst> rate=<mbps> priority=<n> [max_latency=<ms>]
    at <ms> migrate_host <host> <domain>.<n>:<port>
    at <ms> kill_controller <ID>
    at <ms> graceful_leave <ID>

The three built-ins reproduce the evaluation set: uc1 adapts monitoring
around a weak interconnect and a mid-run cut, uc2 exercises priority
reservation with preemption, uc3 migrates a host mid-flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .topology import Diagnostic, ParseResult, Topology, parse_topology

REFERENCE_TOPOLOGY = """\
# Three domains in a triangle.  A and C touch through a direct 10 ms link;
# the detour through B is longer (5 + 6 + 5 ms) but has more capacity.
domain A
domain B
domain C
switch A 0
switch A 1
switch B 0
switch B 1
switch C 0
switch C 1
host A1 at A.0:1
host A2 at A.0:2
host B1 at B.0:1
host C1 at C.0:1
host C2 at C.0:2
host h2 at C.0:3
link A.0:9 A.1:9 latency=1 capacity=100
link B.0:9 B.1:9 latency=6 capacity=100
link C.0:9 C.1:9 latency=1 capacity=100
link A.0:10 B.0:10 latency=5 capacity=20
link B.1:10 C.0:10 latency=5 capacity=20
link A.1:10 C.1:10 latency=10 capacity=10
"""

# Same triangle with the A-C interconnect degraded to a 50 ms weak link
# (a congested / satellite-grade interconnection).
REFERENCE_TOPOLOGY_WEAK = REFERENCE_TOPOLOGY.replace(
    "link A.1:10 C.1:10 latency=10 capacity=10",
    "link A.1:10 C.1:10 latency=50 capacity=10 weak",
)

BUILTIN_TOPOLOGIES = {
    "reference": REFERENCE_TOPOLOGY,
    "reference-weak": REFERENCE_TOPOLOGY_WEAK,
}

UC1_SCENARIO = """\
# Adaptive monitoring exchange around a weak interconnect, then a mid-run cut.
topology builtin:reference-weak
duration 60000
at 33000 cut_link B.1:10-C.0:10
"""

UC2_SCENARIO = """\
# Priority reservation with preemption of an established low-priority flow.
topology builtin:reference
duration 45000
at 0 start_flow f1 A1 C1 rate=8 priority=1
at 25000 request_service f2 A2 C2 rate=8 priority=5 max_latency=15
at 25000 start_flow f2 A2 C2 rate=8 priority=5 max_latency=15
"""

UC3_SCENARIO = """\
# Host migration under a full-rate flow: reroute toward the new domain.
topology builtin:reference
duration 40000
at 0 start_flow f3 A1 h2 rate=10 priority=2
at 20000 migrate_host h2 B.0:3
"""

BUILTIN_SCENARIOS = {
    "uc1": ("adaptive inter-domain monitoring exchange", UC1_SCENARIO),
    "uc2": ("priority reservation with preemption", UC2_SCENARIO),
    "uc3": ("host migration with flow reroute", UC3_SCENARIO),
}

VERB_ARITY = {
    "cut_link": 1,
    "restore_link": 1,
    "stop_flow": 1,
    "kill_controller": 1,
    "graceful_leave": 1,
    "migrate_host": 2,
    "start_flow": 3,
    "request_service": 3,
}


@dataclass
class Action:
    at_ms: float
    verb: str
    args: list[str]
    options: dict[str, str] = field(default_factory=dict)


@dataclass
class Scenario:
    topology_ref: str
    topology: Topology
    duration_ms: float
    actions: list[Action]


def parse_scenario(text: str, topology_loader=None) -> "ScenarioParseResult":
    """Parse a scenario document; topology references are resolved eagerly.

    ``topology_loader(ref)`` maps a topology reference to document text; the
    default accepts only ``builtin:<name>`` references.
    """
    if topology_loader is None:
        topology_loader = builtin_topology_loader

    diags: list[Diagnostic] = []
    topology_ref = None
    duration = None
    actions: list[Action] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword = tokens[0]
        if keyword == "topology":
            if len(tokens) != 2:
                diags.append(Diagnostic(lineno, "expected: topology <ref>"))
            elif topology_ref is not None:
                diags.append(Diagnostic(lineno, "duplicate topology directive"))
            else:
                topology_ref = tokens[1]
        elif keyword == "duration":
            if len(tokens) != 2:
                diags.append(Diagnostic(lineno, "expected: duration <ms>"))
                continue
            try:
                duration = float(tokens[1])
            except ValueError:
                diags.append(Diagnostic(lineno, f"bad duration {tokens[1]!r}"))
        elif keyword == "at":
            if len(tokens) < 3:
                diags.append(Diagnostic(lineno, "expected: at <ms> <verb> ..."))
                continue
            try:
                at_ms = float(tokens[1])
            except ValueError:
                diags.append(Diagnostic(lineno, f"bad action time {tokens[1]!r}"))
                continue
            verb = tokens[2]
            if verb not in VERB_ARITY:
                diags.append(Diagnostic(lineno, f"unknown action verb {verb!r}"))
                continue
            rest = tokens[3:]
            positional = [t for t in rest if "=" not in t]
            options = dict(t.split("=", 1) for t in rest if "=" in t)
            if len(positional) != VERB_ARITY[verb]:
                diags.append(Diagnostic(
                    lineno, f"{verb} takes {VERB_ARITY[verb]} positional argument(s)"))
                continue
            if verb in ("start_flow", "request_service"):
                missing = {"rate", "priority"} - set(options)
                if missing:
                    diags.append(Diagnostic(
                        lineno, f"{verb} requires {', '.join(sorted(missing))}="))
                    continue
            actions.append(Action(at_ms, verb, positional, options))
        else:
            diags.append(Diagnostic(lineno, f"unknown keyword {keyword!r}"))

    if topology_ref is None:
        diags.append(Diagnostic(0, "scenario declares no topology"))
    if duration is None:
        diags.append(Diagnostic(0, "scenario declares no duration"))
    if diags:
        return ScenarioParseResult(None, diags)

    topo_text = topology_loader(topology_ref)
    if topo_text is None:
        return ScenarioParseResult(
            None, [Diagnostic(0, f"cannot resolve topology reference {topology_ref!r}")])
    topo_result = parse_topology(topo_text)
    if not topo_result.ok:
        return ScenarioParseResult(
            None,
            [Diagnostic(d.line, f"topology {topology_ref}: {d.message}")
             for d in topo_result.diagnostics],
        )

    actions.sort(key=lambda a: a.at_ms)
    scenario = Scenario(topology_ref, topo_result.topology, duration, actions)
    entity_diags = _check_entities(scenario)
    if entity_diags:
        return ScenarioParseResult(None, entity_diags)
    return ScenarioParseResult(scenario, [])


@dataclass
class ScenarioParseResult:
    scenario: Scenario | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def builtin_topology_loader(ref: str) -> str | None:
    if ref.startswith("builtin:"):
        return BUILTIN_TOPOLOGIES.get(ref.split(":", 1)[1])
    return None


def _check_entities(scenario: Scenario) -> list[Diagnostic]:
    """Actions must reference entities the topology declares."""
    topo = scenario.topology
    diags: list[Diagnostic] = []
    link_ids = {l.link_id for l in topo.links}
    for action in scenario.actions:
        if action.verb in ("cut_link", "restore_link"):
            if action.args[0] not in link_ids:
                diags.append(Diagnostic(0, f"{action.verb}: unknown link {action.args[0]}"))
        elif action.verb in ("start_flow", "request_service"):
            for host in action.args[1:3]:
                if host not in topo.hosts:
                    diags.append(Diagnostic(0, f"{action.verb}: unknown host {host}"))
        elif action.verb == "migrate_host":
            if action.args[0] not in topo.hosts:
                diags.append(Diagnostic(0, f"migrate_host: unknown host {action.args[0]}"))
        elif action.verb in ("kill_controller", "graceful_leave"):
            if action.args[0] not in topo.domains:
                diags.append(Diagnostic(0, f"{action.verb}: unknown domain {action.args[0]}"))
    return diags
