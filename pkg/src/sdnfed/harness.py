"""Scenario execution and metrics extraction.

``run_scenario`` boots one controller per domain at t=0, schedules the timed
actions, runs the event loop to the scenario's duration, and distills the
trace into delimited report tables: per-link-direction control traffic
bucketed per second and per category, plus per-flow delivery series.
Everything is deterministic; running the same scenario twice yields
byte-identical files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .controller import DomainController
from .model import Endpoint, FlowSpec
from .scenario import (
    BUILTIN_SCENARIOS,
    Scenario,
    ScenarioParseResult,
    builtin_topology_loader,
    parse_scenario,
)
from .sim import Simulation
from .topology import Topology

log = logging.getLogger(__name__)

CATEGORIES = ("bus", "connectivity", "monitoring", "reachability", "reservation")


@dataclass
class RunResult:
    files: dict[str, str]
    trace: str
    summary: dict


def build_simulation(topology: Topology) -> tuple[Simulation, dict[str, DomainController]]:
    """Instantiate the network and one controller per domain (not yet booted)."""
    sim = Simulation()
    for node in topology.switches:
        sim.network.add_switch(node)
    for link in topology.links:
        sim.network.add_link(link)
    for address, attach in topology.hosts.items():
        sim.network.attach_host(address, attach)

    controllers: dict[str, DomainController] = {}
    for index, domain in enumerate(sorted(topology.domains)):
        controller = DomainController(
            sim, domain,
            server_ip=f"10.0.0.{index + 1}",
            server_port=5670 + index,
            server_name=f"ctl-{domain}"[:14],
        )
        controller.adopt_topology(topology.switches, topology.links, topology.hosts)
        controllers[domain] = controller
    return sim, controllers


def _flow_from_action(action) -> FlowSpec:
    flow_id, src, dst = action.args
    max_latency = action.options.get("max_latency")
    return FlowSpec(
        id=flow_id, src=src, dst=dst,
        priority=int(action.options["priority"]),
        bandwidth_mbps=float(action.options["rate"]),
        max_latency_ms=float(max_latency) if max_latency is not None else None,
    )


def _schedule_actions(sim: Simulation, controllers: dict[str, DomainController],
                      scenario: Scenario) -> None:
    def controller_of_host(address: str) -> DomainController:
        attach = scenario.topology.hosts[address]
        return controllers[attach.node.domain]

    for action in scenario.actions:
        def execute(action=action):
            sim.log("ACT", action.verb, " ".join(action.args) or "-")
            if action.verb == "cut_link":
                sim.cut_link(action.args[0])
            elif action.verb == "restore_link":
                sim.restore_link(action.args[0])
            elif action.verb == "start_flow":
                flow = _flow_from_action(action)
                until = float(action.options.get("until", scenario.duration_ms))
                sim.inject_flow(flow, flow.bandwidth_mbps, sim.now, until)
            elif action.verb == "stop_flow":
                flow_id = action.args[0]
                sim.stop_flow(flow_id)
                run = sim.flows.get(flow_id)
                if run is not None:
                    controller_of_host(run.flow.src).teardown_flow(flow_id)
            elif action.verb == "request_service":
                flow = _flow_from_action(action)
                controller_of_host(flow.src).request_service(flow)
            elif action.verb == "migrate_host":
                host = action.args[0]
                new_attach = Endpoint.parse(action.args[1])
                old_ep = sim.network.hosts[host].attach
                old_domain, new_domain = sim.migrate_host(host, new_attach)
                controllers[old_domain].on_host_detached(host, old_ep)
                controllers[new_domain].on_host_attached(host, new_attach)
            elif action.verb == "kill_controller":
                controllers[action.args[0]].kill()
            elif action.verb == "graceful_leave":
                controllers[action.args[0]].messenger.graceful_leave()

        sim.schedule(action.at_ms, execute)


def execute_scenario(scenario: Scenario, include_trace: bool = True
                     ) -> tuple[RunResult, Simulation, dict[str, DomainController]]:
    """Run a scenario and also hand back the simulation for inspection."""
    sim, controllers = build_simulation(scenario.topology)
    for domain in sorted(controllers):
        controllers[domain].boot()

    def no_oversubscription():
        for domain in sorted(controllers):
            bad = controllers[domain].db.oversubscribed_directions()
            if bad:
                raise AssertionError(f"{domain} oversubscribed at {sim.now}: {bad}")

    sim.invariant_hooks.append(no_oversubscription)
    _schedule_actions(sim, controllers, scenario)
    sim.run(scenario.duration_ms)

    files = {
        "control_traffic.tsv": render_control_traffic(sim, scenario),
        "flows.tsv": render_flows(sim),
    }
    trace = sim.trace.render()
    if include_trace:
        files["trace.log"] = trace
    result = RunResult(files=files, trace=trace,
                       summary=_summary(sim, scenario, controllers))
    return result, sim, controllers


def run_scenario(scenario: Scenario, include_trace: bool = True) -> RunResult:
    result, _, _ = execute_scenario(scenario, include_trace=include_trace)
    return result


def bus_records(sim: Simulation) -> list[tuple[float, str, str, int, str, str, str]]:
    """Structured view of the BUS trace records.

    Yields (time, origin, topic, bytes, from_domain, to_domain, category).
    """
    out = []
    for t, kind, subject, detail in sim.trace.records:
        if kind != "BUS":
            continue
        topic, nbytes, direction, category = detail.split(" ")
        from_domain, to_domain = direction.split(">")
        out.append((t, subject, topic, int(nbytes), from_domain, to_domain, category))
    return out


def render_control_traffic(sim: Simulation, scenario: Scenario) -> str:
    """Per-second, per-category control bytes for every peering direction."""
    directions = sorted({
        pair
        for link in scenario.topology.links
        if link.kind == "peering"
        for pair in ((link.a.node.domain, link.b.node.domain),
                     (link.b.node.domain, link.a.node.domain))
    })
    seconds = int(scenario.duration_ms // 1000)
    buckets: dict[tuple[str, str, int], dict[str, int]] = {}
    for t, _, _, nbytes, from_d, to_d, category in bus_records(sim):
        bucket = min(int(t // 1000), seconds - 1)
        cell = buckets.setdefault((from_d, to_d, bucket), {c: 0 for c in CATEGORIES})
        cell[category] += nbytes

    lines = ["from\tto\tsecond\t" + "\t".join(CATEGORIES) + "\ttotal"]
    for from_d, to_d in directions:
        for second in range(seconds):
            cell = buckets.get((from_d, to_d, second), {c: 0 for c in CATEGORIES})
            total = sum(cell.values())
            lines.append(
                f"{from_d}\t{to_d}\t{second}\t"
                + "\t".join(str(cell[c]) for c in CATEGORIES)
                + f"\t{total}"
            )
    return "\n".join(lines) + "\n"


def render_flows(sim: Simulation) -> str:
    lines = ["flow\ttime_ms\tdelivered\tlatency_ms"]
    for flow_id in sorted(sim.flows):
        for sample in sim.flows[flow_id].samples:
            latency = f"{sample.latency_ms:.3f}" if sample.delivered else ""
            lines.append(f"{flow_id}\t{sample.at_ms:.1f}\t{int(sample.delivered)}\t{latency}")
    return "\n".join(lines) + "\n"


def _summary(sim: Simulation, scenario: Scenario,
             controllers: dict[str, DomainController]) -> dict:
    flows = {}
    for flow_id in sorted(sim.flows):
        run = sim.flows[flow_id]
        flows[flow_id] = {
            "offered": run.offered(),
            "dropped": run.dropped(),
            "loss_rate": round(run.loss_rate(), 6),
        }
    total_bus_bytes = sum(r[3] for r in bus_records(sim))
    return {
        "duration_ms": scenario.duration_ms,
        "domains": sorted(controllers),
        "flows": flows,
        "control_bytes": total_bus_bytes,
        "trace_records": len(sim.trace.records),
    }


def load_scenario_text(name_or_path: str) -> tuple[str, str] | None:
    """Resolve a CLI argument to (label, scenario text); None when unknown."""
    if name_or_path in BUILTIN_SCENARIOS:
        return name_or_path, BUILTIN_SCENARIOS[name_or_path][1]
    path = Path(name_or_path)
    if path.is_file():
        return path.stem, path.read_text()
    return None


def file_topology_loader(base_dir: Path):
    """Topology loader that also resolves paths relative to the scenario file."""
    def loader(ref: str) -> str | None:
        text = builtin_topology_loader(ref)
        if text is not None:
            return text
        candidate = Path(ref)
        if not candidate.is_absolute():
            candidate = base_dir / candidate
        if candidate.is_file():
            return candidate.read_text()
        return None
    return loader


def parse_scenario_arg(name_or_path: str) -> tuple[str, ScenarioParseResult] | None:
    resolved = load_scenario_text(name_or_path)
    if resolved is None:
        return None
    label, text = resolved
    base = Path(name_or_path).parent if Path(name_or_path).is_file() else Path.cwd()
    return label, parse_scenario(text, topology_loader=file_topology_loader(base))
