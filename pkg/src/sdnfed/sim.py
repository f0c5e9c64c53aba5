"""Deterministic discrete-event simulator of the data plane.

Switches, links, forwarding rules, fluid-sampled flows and probe frames live
here; controllers and agents run purely as callbacks inside the single event
loop.  Identical inputs always produce the identical event order: events run
in (time, insertion sequence) order and nothing reads a wall clock or an
unseeded random source.

Flows are sampled on a fixed 10 ms tick instead of per-packet: each tick one
sample per active flow walks the current forwarding rules, picks up the sum
of link latencies, and is dropped deterministically when a hop has no rule,
a link is cut, or a direction is offered more than its capacity (excess is
dropped proportionally via an error-diffusion accumulator).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

from .model import Endpoint, FlowSpec, LinkSpec, NodeId, direction_key

FLOW_TICK_MS = 10.0
MAX_WALK_HOPS = 32


class SchedulingError(ValueError):
    """An event was scheduled in the simulated past."""


class TopologyLookupError(KeyError):
    """A switch, host or link reference did not resolve."""


class Trace:
    """Append-only event log: one `time_ms kind subject detail` line per record."""

    def __init__(self):
        self.records: list[tuple[float, str, str, str]] = []

    def log(self, time_ms: float, kind: str, subject: str, detail: str) -> None:
        self.records.append((time_ms, kind, subject, detail))

    def lines(self) -> list[str]:
        return [f"{t:.3f} {kind} {subject} {detail}" for t, kind, subject, detail in self.records]

    def render(self) -> str:
        return "\n".join(self.lines()) + ("\n" if self.records else "")


class EventLoop:
    """Priority queue of timestamped callbacks with FIFO tie-breaking."""

    def __init__(self):
        self.now_ms: float = 0.0
        self._seq = 0
        self._heap: list[tuple[float, int, Callable[[], None]]] = []

    def schedule(self, at_ms: float, action: Callable[[], None]) -> None:
        if at_ms < self.now_ms:
            raise SchedulingError(f"cannot schedule at {at_ms} (now is {self.now_ms})")
        self._seq += 1
        heapq.heappush(self._heap, (at_ms, self._seq, action))

    def run_until(self, end_ms: float) -> None:
        while self._heap and self._heap[0][0] <= end_ms:
            at, _, action = heapq.heappop(self._heap)
            self.now_ms = at
            action()
        self.now_ms = max(self.now_ms, end_ms)

    def pending(self) -> int:
        return len(self._heap)


@dataclass
class Host:
    address: str
    attach: Optional[Endpoint]


@dataclass
class ForwardingRule:
    switch: NodeId
    match_dst: str
    out_port: int
    installed_at: float


@dataclass
class FlowSample:
    at_ms: float
    delivered: bool
    latency_ms: Optional[float]


@dataclass
class FlowRun:
    """Offered traffic for one flow plus its per-tick delivery record."""

    flow: FlowSpec
    rate_mbps: float
    start_ms: float
    end_ms: float
    samples: list[FlowSample] = field(default_factory=list)
    drop_debt: float = 0.0

    def offered(self) -> int:
        return len(self.samples)

    def dropped(self) -> int:
        return sum(1 for s in self.samples if not s.delivered)

    def loss_rate(self) -> float:
        return self.dropped() / len(self.samples) if self.samples else 0.0


class Network:
    """Topology state: switches, hosts, links, rule tables and counters."""

    def __init__(self):
        self.switches: set[NodeId] = set()
        self.hosts: dict[str, Host] = {}
        self.links: dict[str, LinkSpec] = {}
        self.link_up: dict[str, bool] = {}
        self._port_link: dict[str, LinkSpec] = {}   # endpoint str -> link
        self._port_host: dict[str, str] = {}        # endpoint str -> host address
        self.rules: dict[tuple[str, str], ForwardingRule] = {}
        self.counters: dict[str, int] = {}

    # -- construction -------------------------------------------------------

    def add_switch(self, node: NodeId) -> None:
        self.switches.add(node)

    def add_link(self, link: LinkSpec) -> None:
        for ep in (link.a, link.b):
            if ep.node not in self.switches:
                raise TopologyLookupError(f"link endpoint {ep} references unknown switch")
            if str(ep) in self._port_link or str(ep) in self._port_host:
                raise TopologyLookupError(f"port {ep} already in use")
        self.links[link.link_id] = link
        self.link_up[link.link_id] = True
        self._port_link[str(link.a)] = link
        self._port_link[str(link.b)] = link

    def attach_host(self, address: str, attach: Endpoint) -> None:
        if attach.node not in self.switches:
            raise TopologyLookupError(f"host {address} references unknown switch {attach.node}")
        if str(attach) in self._port_link or str(attach) in self._port_host:
            raise TopologyLookupError(f"port {attach} already in use")
        self.hosts[address] = Host(address, attach)
        self._port_host[str(attach)] = address

    def detach_host(self, address: str) -> Endpoint:
        host = self.hosts.get(address)
        if host is None or host.attach is None:
            raise TopologyLookupError(f"host {address} is not attached")
        old = host.attach
        del self._port_host[str(old)]
        host.attach = None
        return old

    def reattach_host(self, address: str, attach: Endpoint) -> None:
        if address not in self.hosts:
            raise TopologyLookupError(f"unknown host {address}")
        if str(attach) in self._port_link or str(attach) in self._port_host:
            raise TopologyLookupError(f"port {attach} already in use")
        self.hosts[address].attach = attach
        self._port_host[str(attach)] = address

    # -- state --------------------------------------------------------------

    def set_link_up(self, link_id: str, up: bool) -> None:
        if link_id not in self.links:
            raise TopologyLookupError(f"unknown link {link_id}")
        self.link_up[link_id] = up

    def link_is_up(self, link_id: str) -> bool:
        return self.link_up[link_id]

    def install_rule(self, rule: ForwardingRule) -> None:
        if rule.switch not in self.switches:
            raise TopologyLookupError(f"unknown switch {rule.switch}")
        self.rules[(str(rule.switch), rule.match_dst)] = rule

    def remove_rule(self, switch: NodeId, match_dst: str) -> bool:
        return self.rules.pop((str(switch), match_dst), None) is not None

    def bump(self, counter: str, by: int = 1) -> None:
        self.counters[counter] = self.counters.get(counter, 0) + by

    # -- path walking ------------------------------------------------------------

    def walk(self, src_switch: NodeId, dst: str, at_ms: float):
        """Follow installed rules from a switch toward a host.

        Returns (hops, None) on success where hops is the list of
        (link, dirkey) traversed, or (None, reason) when the walk dies.
        Rules installed at exactly ``at_ms`` are not yet in effect.
        """
        host = self.hosts.get(dst)
        current = src_switch
        hops: list[tuple[LinkSpec, str]] = []
        for _ in range(MAX_WALK_HOPS):
            rule = self.rules.get((str(current), dst))
            if rule is None or rule.installed_at >= at_ms:
                self.bump(f"miss:{current}")
                return None, f"no rule at {current}"
            out = Endpoint(current, rule.out_port)
            attached = self._port_host.get(str(out))
            if attached is not None:
                if attached == dst:
                    return hops, None
                self.bump(f"miss:{current}")
                return None, f"port {out} hosts {attached}, not {dst}"
            link = self._port_link.get(str(out))
            if link is None:
                self.bump(f"miss:{current}")
                return None, f"port {out} is dangling"
            if not self.link_up[link.link_id]:
                self.bump(f"drop:{link.link_id}")
                return None, f"link {link.link_id} is cut"
            far = link.other_end(out)
            hops.append((link, direction_key(out, far)))
            current = far.node
        if host is not None and host.attach is None:
            return None, f"host {dst} is detached"
        return None, "hop limit exceeded"

    def probe_path(self, path: list[LinkSpec]) -> Optional[float]:
        """One-way latency over an explicit link path, or None on loss.

        Probe frames carry an embedded timestamp and are not subject to
        capacity limits; a cut anywhere on the path loses the probe.
        """
        total = 0.0
        for link in path:
            if not self.link_up[link.link_id]:
                return None
            total += link.latency_ms
        return total

    def ping_link(self, link: LinkSpec) -> Optional[float]:
        """Round-trip time over one link (forward plus reverse), None on loss."""
        one_way = self.probe_path([link])
        if one_way is None:
            return None
        return 2.0 * one_way


class Simulation:
    """Event loop, network, trace and the controller registry in one place."""

    def __init__(self):
        self.loop = EventLoop()
        self.network = Network()
        self.trace = Trace()
        self.controllers: dict[str, object] = {}
        self.flows: dict[str, FlowRun] = {}
        self._ticker_running = False
        self.invariant_hooks: list[Callable[[], None]] = []

    @property
    def now(self) -> float:
        return self.loop.now_ms

    def schedule(self, at_ms: float, action: Callable[[], None]) -> None:
        self.loop.schedule(at_ms, action)

    def schedule_in(self, delay_ms: float, action: Callable[[], None]) -> None:
        self.loop.schedule(self.now + delay_ms, action)

    def log(self, kind: str, subject: str, detail: str) -> None:
        self.trace.log(self.now, kind, subject, detail)

    def register_controller(self, domain: str, controller: object) -> None:
        self.controllers[domain] = controller

    def run(self, duration_ms: float) -> None:
        self.loop.run_until(duration_ms)

    # -- scenario-facing operations ---------------------------------------------

    def cut_link(self, link_id: str) -> None:
        self.network.set_link_up(link_id, False)

    def restore_link(self, link_id: str) -> None:
        self.network.set_link_up(link_id, True)

    def migrate_host(self, address: str, new_attach: Endpoint) -> tuple[str, str]:
        """Move a host to a new attachment point, notifying both controllers."""
        old = self.network.detach_host(address)
        self.network.reattach_host(address, new_attach)
        return old.node.domain, new_attach.node.domain

    def inject_flow(self, flow: FlowSpec, rate_mbps: float, start_ms: float, end_ms: float) -> FlowRun:
        src = self.network.hosts.get(flow.src)
        dst = self.network.hosts.get(flow.dst)
        if src is None or src.attach is None:
            raise TopologyLookupError(f"flow {flow.id}: source host {flow.src} not attached")
        if dst is None:
            raise TopologyLookupError(f"flow {flow.id}: unknown destination host {flow.dst}")
        run = FlowRun(flow=flow, rate_mbps=rate_mbps, start_ms=start_ms, end_ms=end_ms)
        self.flows[flow.id] = run
        self._ensure_ticker()
        return run

    def stop_flow(self, flow_id: str) -> None:
        run = self.flows.get(flow_id)
        if run is not None:
            run.end_ms = min(run.end_ms, self.now)

    # -- flow sampling ----------------------------------------------------------

    def _ensure_ticker(self) -> None:
        if not self._ticker_running:
            self._ticker_running = True
            first = self.now - (self.now % FLOW_TICK_MS)
            if first < self.now:
                first += FLOW_TICK_MS
            self.schedule(first, self._flow_tick)

    def _flow_tick(self) -> None:
        now = self.now
        active = sorted(
            (run for run in self.flows.values() if run.start_ms <= now < run.end_ms),
            key=lambda r: r.flow.id,
        )
        walked: list[tuple[FlowRun, Optional[list[tuple[LinkSpec, str]]], Optional[str]]] = []
        loads: dict[str, float] = {}
        for run in active:
            src_host = self.network.hosts[run.flow.src]
            if src_host.attach is None:
                walked.append((run, None, "source detached"))
                continue
            hops, reason = self.network.walk(src_host.attach.node, run.flow.dst, now)
            walked.append((run, hops, reason))
            if hops is not None:
                for _, dirkey in hops:
                    loads[dirkey] = loads.get(dirkey, 0.0) + run.rate_mbps

        for run, hops, reason in walked:
            if hops is None:
                run.samples.append(FlowSample(now, False, None))
                if reason and reason.startswith("no rule"):
                    self._packet_in(run.flow, reason)
                continue
            deliver_prob = 1.0
            latency = 0.0
            for link, dirkey in hops:
                load = loads[dirkey]
                overload = max(0.0, (load - link.capacity_mbps) / load) if load > 0 else 0.0
                deliver_prob *= (1.0 - overload) * (1.0 - link.loss_rate)
                latency += link.latency_ms
            run.drop_debt += 1.0 - deliver_prob
            if run.drop_debt >= 1.0 - 1e-9:
                run.drop_debt -= 1.0
                run.samples.append(FlowSample(now, False, None))
                for link, dirkey in hops:
                    if loads[dirkey] > link.capacity_mbps:
                        self.bump_egress(dirkey)
            else:
                run.samples.append(FlowSample(now, True, latency))

        for hook in self.invariant_hooks:
            hook()

        if any(run.end_ms > now for run in self.flows.values()):
            self.schedule(now + FLOW_TICK_MS, self._flow_tick)
        else:
            self._ticker_running = False

    def bump_egress(self, dirkey: str) -> None:
        src, _, _ = dirkey.partition(">")
        self.network.bump(f"drops:{src}")

    def _packet_in(self, flow: FlowSpec, reason: str) -> None:
        src_host = self.network.hosts.get(flow.src)
        if src_host is None or src_host.attach is None:
            return
        controller = self.controllers.get(src_host.attach.node.domain)
        if controller is not None:
            controller.on_packet_in(flow)
