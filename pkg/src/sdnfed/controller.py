"""Per-domain controller: the intra-domain brain.

One :class:`DomainController` manages one domain: it measures its own links,
keeps threshold events, computes QoS paths over the layered view (local
switches plus the aggregated inter-domain graph), admits service requests,
and reacts to failures by rerouting or stopping flows.  All inter-domain
interaction goes through the messenger and the four agents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .agents import (
    WEAK,
    ConnectivityAgent,
    MonitoringAgent,
    ReachabilityAgent,
    ReservationAgent,
)
from .messenger import Messenger
from .model import (
    COMMITTED,
    Endpoint,
    ExtendedDatabase,
    FlowSpec,
    LinkSpec,
    MonitoringSample,
    NodeId,
    Reservation,
    direction_key,
)
from .routing import Edge, PathFound, shortest_feasible_path
from .sim import ForwardingRule, Simulation

MONITOR_PERIOD_MS = 2000.0
AGENT_PERIOD_MS = 2000.0
EVENTS_PERIOD_MS = 500.0


@dataclass
class PathResult:
    """A feasible path through the layered graph, ready to reserve."""

    nodes: list[str]
    total_latency_ms: float
    bottleneck_mbps: float
    domain_sequence: list[str]
    peering_link_ids: list[str]
    constrained_dirs: list[str]
    source_holds: dict[str, float]
    source_rules: list[tuple[NodeId, str, int]]
    source_latency_ms: float
    remote_peering_dirs: list[str]


class DomainController:
    def __init__(self, sim: Simulation, domain: str,
                 server_ip: str = "10.0.0.1", server_port: int = 5670,
                 server_name: str = "ctl"):
        self.sim = sim
        self.domain = domain
        self.alive = True
        self.db = ExtendedDatabase(domain)
        self.messenger = Messenger(sim, self, domain, server_ip, server_port, server_name)
        self.monitoring_agent = MonitoringAgent(self)
        self.connectivity_agent = ConnectivityAgent(self)
        self.reachability_agent = ReachabilityAgent(self)
        self.reservation_agent = ReservationAgent(self)
        self.flow_meta: dict[str, dict] = {}
        self.initiated: set[str] = set()
        self.flow_rules: dict[str, list[tuple[NodeId, str, int]]] = {}
        self._update_ctx: dict[str, dict] = {}
        self._preempt: dict[str, dict] = {}
        self.impaired_links: set[str] = set()
        self._event_history: dict[str, list[tuple[float, int]]] = {}
        sim.register_controller(domain, self)

    # -- construction ------------------------------------------------------------

    def adopt_topology(self, switches: list[NodeId], links: list[LinkSpec],
                       hosts: dict[str, Endpoint]) -> None:
        """Learn the domain's own slice of the topology (southbound discovery)."""
        for node in switches:
            if node.domain == self.domain:
                self.db.add_switch(node)
        for link in links:
            if self.domain not in link.domains:
                continue
            self.db.add_link(link)
            if link.kind == "peering":
                self.messenger.add_border_port(link)
        for address, attach in hosts.items():
            if attach.node.domain == self.domain:
                self.db.local_hosts[address] = attach
                self.db.upsert_host(address, self.domain)
                self.sim.network.install_rule(
                    ForwardingRule(attach.node, address, attach.port, self.sim.now)
                )

    def boot(self) -> None:
        self.messenger.subscribe("general.*.*", lambda msg: None)
        self.connectivity_agent.subscribe()
        self.monitoring_agent.subscribe()
        self.reachability_agent.subscribe()
        self.reservation_agent.subscribe()
        self.messenger.boot()
        self.sim.schedule(self.sim.now, self._monitor_tick)
        self.sim.schedule(self.sim.now, self._agents_tick)
        self.sim.schedule(self.messenger._next_grid(EVENTS_PERIOD_MS), self._events_tick)

    def kill(self) -> None:
        self.alive = False

    def log_ctrl(self, action: str, detail: str) -> None:
        self.sim.log("CTRL", self.domain, f"{action} {detail}")

    # -- link/peer state ----------------------------------------------------------

    def peering_effective_up(self, link: LinkSpec) -> bool:
        """A peering link is usable when both the wire and the peer are alive."""
        if not self.db.link_up.get(link.link_id, False):
            return False
        far = link.other_end(link.endpoint_in(self.domain)).node.domain
        return self.messenger.peer_is_up(far)

    def merged_inter_domain_links(self) -> dict[str, dict]:
        """Own peering links plus advertised ones, conservatively merged.

        An edge counts as up only if every view of it (our own and every
        advertiser's latest record) says up.
        """
        views: dict[str, dict] = {}
        for link in self.db.peering_links():
            views[link.link_id] = {
                "a": str(link.a), "b": str(link.b),
                "latency_ms": link.latency_ms, "capacity_mbps": link.capacity_mbps,
                "weak": self.monitoring_agent.classify_link(link) == WEAK,
                "statuses": [self.peering_effective_up(link)],
            }
        for advertiser in sorted(self.db.domain_graph):
            for link_id, rec in sorted(self.db.domain_graph[advertiser].items()):
                entry = views.setdefault(link_id, {
                    "a": rec["a"], "b": rec["b"],
                    "latency_ms": rec["latency_ms"],
                    "capacity_mbps": rec["capacity_mbps"],
                    "weak": False, "statuses": [],
                })
                entry["weak"] = entry["weak"] or bool(rec["weak"])
                entry["statuses"].append(rec["status"] == "up")
        merged = {}
        for link_id, entry in views.items():
            merged[link_id] = {
                "a": entry["a"], "b": entry["b"],
                "dom_a": Endpoint.parse(entry["a"]).node.domain,
                "dom_b": Endpoint.parse(entry["b"]).node.domain,
                "latency_ms": float(entry["latency_ms"]),
                "capacity_mbps": float(entry["capacity_mbps"]),
                "weak": entry["weak"],
                "up": all(entry["statuses"]) and bool(entry["statuses"]),
            }
        return merged

    def nominal_relay_exists(self, target: str, avoiding: str) -> bool:
        """Is there a control-plane route to ``target`` using only nominal links?"""
        adjacency: dict[str, set[str]] = {}
        for link_id, rec in self.merged_inter_domain_links().items():
            if link_id == avoiding or rec["weak"] or not rec["up"]:
                continue
            adjacency.setdefault(rec["dom_a"], set()).add(rec["dom_b"])
            adjacency.setdefault(rec["dom_b"], set()).add(rec["dom_a"])
        frontier = [self.domain]
        seen = {self.domain}
        while frontier:
            here = frontier.pop()
            if here == target:
                return True
            for nxt in sorted(adjacency.get(here, ())):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return False

    # -- residuals & local search -----------------------------------------------

    def residual(self, dirkey: str, min_priority: Optional[int] = None,
                 exclude_flow: Optional[str] = None,
                 extra_holds: Optional[dict[str, float]] = None) -> float:
        value = self.db.residual_bandwidth(dirkey, min_priority=min_priority,
                                           exclude_flow=exclude_flow)
        value -= self.reservation_agent.pending_held(dirkey, exclude_flow)
        if extra_holds:
            value -= extra_holds.get(dirkey, 0.0)
        return max(0.0, value)

    def local_path(self, src: NodeId, dst: NodeId, demand_mbps: float,
                   exclude_flow: Optional[str] = None) -> Optional[PathFound]:
        edges = self._local_edges(lambda dk: self.residual(dk, exclude_flow=exclude_flow))
        return shortest_feasible_path(edges, f"sw:{src}", f"sw:{dst}", demand_mbps)

    def _local_edges(self, residual_fn: Callable[[str], float]) -> list[Edge]:
        edges = []
        for link in self.db.intra_links():
            if not self.db.link_up.get(link.link_id, False):
                continue
            if link.link_id in self.impaired_links:
                continue
            for src_ep, dst_ep in ((link.a, link.b), (link.b, link.a)):
                dk = direction_key(src_ep, dst_ep)
                edges.append(Edge(
                    f"sw:{src_ep.node}", f"sw:{dst_ep.node}", link.latency_ms,
                    residual_fn(dk),
                    ref=("intra", link.link_id, dk, str(src_ep), str(dst_ep)),
                ))
        return edges

    # -- path computation ----------------------------------------------------------

    def compute_path(self, flow: FlowSpec, min_priority: Optional[int] = None,
                     exclude_flow: Optional[str] = None,
                     extra_holds: Optional[dict[str, float]] = None) -> Optional[PathResult]:
        """Least-latency bandwidth-feasible path over the layered graph.

        Local switches contribute exact residuals; remote domains contribute
        transit edges weighted by their freshest adverts plus peering edges
        from the merged inter-domain graph.
        """
        src_attach = self.db.local_hosts.get(flow.src)
        if src_attach is None:
            return None
        exclude = exclude_flow if exclude_flow is not None else flow.id

        def residual_fn(dk: str) -> float:
            return self.residual(dk, min_priority=min_priority,
                                 exclude_flow=exclude, extra_holds=extra_holds)

        dst_attach = self.db.local_hosts.get(flow.dst)
        if dst_attach is not None:
            target = f"sw:{dst_attach.node}"
        else:
            dst_domain = self.db.host_map.get(flow.dst)
            if dst_domain is None or dst_domain == self.domain:
                return None
            target = f"dom:{dst_domain}"

        edges = self._local_edges(residual_fn)
        merged = self.merged_inter_domain_links()
        own_peering = {l.link_id for l in self.db.peering_links()}
        for link in self.db.peering_links():
            if not self.peering_effective_up(link) or link.link_id in self.impaired_links:
                continue
            mine = link.endpoint_in(self.domain)
            far = link.other_end(mine)
            out_dk = direction_key(mine, far)
            in_dk = direction_key(far, mine)
            far_dom = far.node.domain
            edges.append(Edge(
                f"sw:{mine.node}", f"pp:{far_dom}:{link.link_id}", link.latency_ms,
                residual_fn(out_dk),
                ref=("peering", link.link_id, out_dk, str(mine), str(far), far_dom),
            ))
            edges.append(Edge(
                f"pp:{far_dom}:{link.link_id}", f"sw:{mine.node}", link.latency_ms,
                residual_fn(in_dk),
                ref=("peering", link.link_id, in_dk, str(far), str(mine), self.domain),
            ))
        for sample in self.db.fresh_samples(self.sim.now):
            if sample.reporter == self.domain or sample.pair[0] == sample.pair[1]:
                continue
            if not math.isfinite(sample.latency_ms):
                continue
            edges.append(Edge(
                f"pp:{sample.reporter}:{sample.pair[0]}",
                f"pp:{sample.reporter}:{sample.pair[1]}",
                sample.latency_ms, sample.available_mbps,
                ref=("transit", sample.reporter),
            ))
        for link_id, rec in sorted(merged.items()):
            if link_id in own_peering or not rec["up"] or link_id in self.impaired_links:
                continue
            if self.domain in (rec["dom_a"], rec["dom_b"]):
                continue
            for sa, sb, da, db_ in ((rec["a"], rec["b"], rec["dom_a"], rec["dom_b"]),
                                    (rec["b"], rec["a"], rec["dom_b"], rec["dom_a"])):
                dk = f"{sa}>{sb}"
                edges.append(Edge(
                    f"pp:{da}:{link_id}", f"pp:{db_}:{link_id}", rec["latency_ms"],
                    residual_fn(dk), ref=("peering", link_id, dk, sa, sb, db_),
                ))
        if target.startswith("dom:"):
            dom = target[4:]
            prefix = f"pp:{dom}:"
            entries = sorted({e.dst for e in edges if e.dst.startswith(prefix)})
            for vertex in entries:
                edges.append(Edge(vertex, target, 0.0, float("inf"), ref=("enter", dom)))

        found = shortest_feasible_path(edges, f"sw:{src_attach.node}", target,
                                       flow.bandwidth_mbps, flow.max_latency_ms)
        if found is None:
            return None
        return self._into_path_result(flow, src_attach, dst_attach, found)

    def _into_path_result(self, flow: FlowSpec, src_attach: Endpoint,
                          dst_attach: Optional[Endpoint],
                          found: PathFound) -> Optional[PathResult]:
        domain_sequence = [self.domain]
        peering_link_ids: list[str] = []
        constrained: list[str] = []
        for edge in found.edges:
            kind = edge.ref[0]
            if kind in ("intra", "peering"):
                constrained.append(edge.ref[2])
            if kind == "peering":
                peering_link_ids.append(edge.ref[1])
                entered = edge.ref[5]
                if domain_sequence[-1] != entered:
                    domain_sequence.append(entered)
        if len(set(domain_sequence)) != len(domain_sequence):
            return None

        source_holds: dict[str, float] = {}
        source_rules: list[tuple[NodeId, str, int]] = []
        source_latency = 0.0
        for edge in found.edges:
            kind = edge.ref[0]
            if kind == "intra":
                src_ep = Endpoint.parse(edge.ref[3])
                source_holds[edge.ref[2]] = flow.bandwidth_mbps
                source_rules.append((src_ep.node, flow.dst, src_ep.port))
                source_latency += edge.latency_ms
            elif kind == "peering":
                src_ep = Endpoint.parse(edge.ref[3])
                source_holds[edge.ref[2]] = flow.bandwidth_mbps
                source_rules.append((src_ep.node, flow.dst, src_ep.port))
                source_latency += edge.latency_ms
                break
            else:
                break
        if len(domain_sequence) == 1 and dst_attach is not None:
            source_rules.append((dst_attach.node, flow.dst, dst_attach.port))
        remote_dirs = []
        seen_first_peering = False
        for edge in found.edges:
            if edge.ref[0] == "peering":
                if seen_first_peering:
                    remote_dirs.append(edge.ref[2])
                seen_first_peering = True
        return PathResult(
            nodes=found.nodes,
            total_latency_ms=found.latency_ms,
            bottleneck_mbps=found.bottleneck_mbps,
            domain_sequence=domain_sequence,
            peering_link_ids=peering_link_ids,
            constrained_dirs=constrained,
            source_holds=source_holds,
            source_rules=source_rules,
            source_latency_ms=source_latency,
            remote_peering_dirs=remote_dirs,
        )

    # -- rule management -----------------------------------------------------------

    def apply_flow_rules(self, flow: FlowSpec, rules: list[tuple[NodeId, str, int]]) -> None:
        self.remove_flow_rules(flow.id)
        for node, dst, port in rules:
            self.sim.network.install_rule(ForwardingRule(node, dst, port, self.sim.now))
        self.flow_rules[flow.id] = list(rules)

    def remove_flow_rules(self, flow_id: str) -> None:
        for node, dst, _ in self.flow_rules.pop(flow_id, []):
            self.sim.network.remove_rule(node, dst)

    # -- admission / service management --------------------------------------------

    def request_service(self, flow: FlowSpec) -> dict:
        return self.admit_service(flow, "northbound")

    def admit_service(self, flow: FlowSpec, source: str) -> dict:
        meta = self.flow_meta.get(flow.id)
        if meta is not None and meta["status"] in ("pending", "committed"):
            return meta
        meta = {"status": "pending", "source": source, "requested_at": self.sim.now,
                "flow": flow.to_payload(), "reason": None}
        self.flow_meta[flow.id] = meta
        self.initiated.add(flow.id)
        self.log_ctrl("admit-request",
                      f"{flow.id} {flow.src}>{flow.dst} bw={flow.bandwidth_mbps} "
                      f"pri={flow.priority} via={source}")
        path = self.compute_path(flow)
        if path is not None:
            self._reserve_on_path(flow, path, "setup")
            return meta
        plan = self.reservation_agent.plan_preemption(flow)
        if plan is None:
            self._finish_admission(flow, False, "infeasible")
            return meta
        self.log_ctrl("preempt-plan",
                      f"{flow.id} victims={','.join(plan['victims']) or '-'}")
        self._preempt[flow.id] = {
            "flow": flow,
            "victims": list(plan["victims"]),
            "desired_dirs": list(plan["desired"].constrained_dirs),
        }
        self._preempt_step(flow.id)
        return meta

    def _reserve_on_path(self, flow: FlowSpec, path: PathResult, kind: str) -> None:
        version = self.reservation_agent.next_version()
        if len(path.domain_sequence) == 1:
            entry = {"holds": dict(path.source_holds), "rules": path.source_rules,
                     "path": path.domain_sequence, "kind": kind}
            self.reservation_agent._commit_local(flow, entry, version)
            self.reservation_finished(flow, True, "committed", kind)
        else:
            self.reservation_agent.initiate(flow, path, kind, version)

    def _preempt_step(self, flow_id: str) -> None:
        state = self._preempt.get(flow_id)
        if state is None:
            return
        flow = state["flow"]
        if state["victims"]:
            victim_id = state["victims"].pop(0)
            victim = self.db.reservations.get(victim_id)
            if victim is None or victim.state != COMMITTED:
                self._preempt_step(flow_id)
                return
            relaxed = FlowSpec(
                id=victim.flow.id, src=victim.flow.src, dst=victim.flow.dst,
                priority=victim.flow.priority,
                bandwidth_mbps=victim.flow.bandwidth_mbps, max_latency_ms=None,
            )
            extra = {d: flow.bandwidth_mbps for d in state["desired_dirs"]}
            alt = self.compute_path(relaxed, exclude_flow=victim_id, extra_holds=extra)
            if alt is None:
                del self._preempt[flow_id]
                self._finish_admission(flow, False, "preemption-failed")
                return
            self.log_ctrl("preempt-evict", f"{victim_id} to {'>'.join(alt.domain_sequence)}")

            def after(ok: bool, fid=flow_id):
                if ok:
                    self._preempt_step(fid)
                else:
                    state2 = self._preempt.pop(fid, None)
                    if state2 is not None:
                        self._finish_admission(state2["flow"], False, "preemption-failed")

            self._initiate_update(relaxed, alt, waiter=after, install_now=False)
        else:
            del self._preempt[flow_id]
            path = self.compute_path(flow)
            if path is None:
                self._finish_admission(flow, False, "infeasible-after-preemption")
            else:
                self._reserve_on_path(flow, path, "setup")

    def _initiate_update(self, flow: FlowSpec, path: PathResult,
                         waiter: Optional[Callable[[bool], None]] = None,
                         install_now: bool = True) -> None:
        old = self.db.reservations.get(flow.id)
        self._update_ctx[flow.id] = {
            "old_domains": list(old.domain_path) if old else [],
            "old_version": self.reservation_agent.committed_version.get(flow.id),
            "waiter": waiter,
        }
        if install_now:
            self.apply_flow_rules(flow, path.source_rules)
        self._reserve_on_path(flow, path, "update")

    def reservation_finished(self, flow: FlowSpec, ok: bool, reason: str, kind: str) -> None:
        """Source-side completion callback from the reservation agent."""
        if kind == "update":
            ctx = self._update_ctx.pop(flow.id, None)
            if ok and ctx is not None:
                new_domains = set(self.db.reservations[flow.id].domain_path)
                stale = sorted(set(ctx["old_domains"]) - new_domains - {self.domain})
                if stale and ctx["old_version"] is not None:
                    self.reservation_agent.teardown_stale(flow, stale, ctx["old_version"])
            self.log_ctrl("update-done" if ok else "update-failed", f"{flow.id} {reason}")
            if ctx is not None and ctx["waiter"] is not None:
                ctx["waiter"](ok)
        else:
            self._finish_admission(flow, ok, reason)

    def _finish_admission(self, flow: FlowSpec, ok: bool, reason: str) -> None:
        meta = self.flow_meta[flow.id]
        if ok:
            meta["status"] = "committed"
        elif meta["source"] == "packet-in":
            # transient view (e.g. host map not yet converged): retry on the
            # next unmatched sample
            meta["status"] = "retry"
        else:
            meta["status"] = "rejected"
        meta["reason"] = reason
        self.log_ctrl("admit-ok" if ok else "admit-fail", f"{flow.id} {reason}")

    def teardown_flow(self, flow_id: str) -> dict:
        meta = self.flow_meta.get(flow_id)
        reservation = self.db.reservations.get(flow_id)
        if reservation is not None:
            version = self.reservation_agent.committed_version.get(flow_id, 0)
            self.reservation_agent.initiate_teardown(
                reservation.flow, reservation.domain_path, version)
        if meta is not None:
            meta["status"] = "released"
        self.log_ctrl("teardown", flow_id)
        return meta or {"status": "unknown"}

    def flow_status(self, flow_id: str) -> dict:
        meta = dict(self.flow_meta.get(flow_id, {"status": "unknown"}))
        reservation = self.db.reservations.get(flow_id)
        if reservation is not None:
            meta["domain_path"] = list(reservation.domain_path)
            meta["reservation_state"] = reservation.state
        return meta

    # -- reservation staging (called by the agent for transit/terminal hops) --------

    def stage_reservation_segment(self, flow: FlowSpec, path: list[str],
                                  peering_links: list[str], hop: int,
                                  accumulated_latency_ms: float, kind: str):
        """Check and assemble this domain's segment; returns a dict or a reason string."""
        ingress = self.db.links.get(peering_links[hop - 1])
        if ingress is None:
            return "unknown ingress link"
        if not self.peering_effective_up(ingress):
            return "ingress link down"
        my_in = ingress.endpoint_in(self.domain)
        in_dk = direction_key(ingress.other_end(my_in), my_in)
        if self.residual(in_dk, exclude_flow=flow.id) + 1e-9 < flow.bandwidth_mbps:
            return "bandwidth"
        holds = {in_dk: flow.bandwidth_mbps}
        last = hop == len(path) - 1
        if last:
            attach = self.db.local_hosts.get(flow.dst)
            if attach is None:
                return "destination host not in domain"
            target_node = attach.node
            egress = None
        else:
            egress = self.db.links.get(peering_links[hop])
            if egress is None:
                return "unknown egress link"
            if not self.peering_effective_up(egress):
                return "egress link down"
            my_out = egress.endpoint_in(self.domain)
            out_dk = direction_key(my_out, egress.other_end(my_out))
            if self.residual(out_dk, exclude_flow=flow.id) + 1e-9 < flow.bandwidth_mbps:
                return "bandwidth"
            holds[out_dk] = flow.bandwidth_mbps
            target_node = my_out.node
        segment = self.local_path(my_in.node, target_node, flow.bandwidth_mbps,
                                  exclude_flow=flow.id)
        if segment is None:
            return "no intra-domain capacity"
        total = accumulated_latency_ms + segment.latency_ms
        if egress is not None:
            total += egress.latency_ms
        if flow.max_latency_ms is not None and total > flow.max_latency_ms + 1e-9:
            return "latency"
        rules: list[tuple[NodeId, str, int]] = []
        for edge in segment.edges:
            src_ep = Endpoint.parse(edge.ref[3])
            holds[edge.ref[2]] = flow.bandwidth_mbps
            rules.append((src_ep.node, flow.dst, src_ep.port))
        if last:
            rules.append((attach.node, flow.dst, attach.port))
        else:
            rules.append((target_node, flow.dst, egress.endpoint_in(self.domain).port))
        return {"holds": holds, "rules": rules, "accumulated_latency_ms": total}

    # -- monitoring -----------------------------------------------------------------

    def _monitor_tick(self) -> None:
        if self.alive:
            self.collect_monitoring()
        self.sim.schedule(self.sim.now + MONITOR_PERIOD_MS, self._monitor_tick)

    def collect_monitoring(self) -> None:
        """Probe own links, refresh link state and record transit-pair metrics."""
        now = self.sim.now
        went_down: list[str] = []
        for link in self.db.intra_links():
            alive = self.sim.network.probe_path([link]) is not None
            if alive != self.db.link_up[link.link_id]:
                self.db.set_link_up(link.link_id, alive)
                self.log_ctrl("link-state", f"{link.link_id} {'up' if alive else 'down'}")
                if not alive:
                    went_down.append(link.link_id)
        for link in self.db.peering_links():
            rtt = self.sim.network.ping_link(link)
            alive = rtt is not None
            if alive != self.db.link_up[link.link_id]:
                self.db.set_link_up(link.link_id, alive)
                self.log_ctrl("link-state", f"{link.link_id} {'up' if alive else 'down'}")
                if not alive:
                    went_down.append(link.link_id)
            mine = link.endpoint_in(self.domain)
            out_dk = direction_key(mine, link.other_end(mine))
            self.db.record_sample(MonitoringSample(
                reporter=self.domain, pair=(link.link_id, link.link_id),
                available_mbps=self.residual(out_dk) if alive else 0.0,
                latency_ms=rtt / 2.0 if alive else math.inf,
                timestamp=now,
            ), MONITOR_PERIOD_MS)
        ups = [l for l in self.db.peering_links() if self.peering_effective_up(l)]
        for lin in ups:
            for lout in ups:
                if lin.link_id == lout.link_id:
                    continue
                segment = self.local_path(lin.endpoint_in(self.domain).node,
                                          lout.endpoint_in(self.domain).node, 0.0)
                if segment is None:
                    sample = MonitoringSample(self.domain, (lin.link_id, lout.link_id),
                                              0.0, math.inf, now)
                else:
                    sample = MonitoringSample(self.domain, (lin.link_id, lout.link_id),
                                              segment.bottleneck_mbps,
                                              segment.latency_ms, now)
                self.db.record_sample(sample, MONITOR_PERIOD_MS)
        for link_id in went_down:
            self.handle_link_event(link_id)

    def _agents_tick(self) -> None:
        if self.alive:
            self.monitoring_agent.tick()
            self.connectivity_agent.maybe_advertise()
        self.sim.schedule(self.sim.now + AGENT_PERIOD_MS, self._agents_tick)

    # -- threshold events -------------------------------------------------------------

    def register_event(self, event_id: str, subject: str, mode: str,
                       ceiling: float, window_ms: Optional[float] = None) -> None:
        if mode not in ("absolute", "relative"):
            raise ValueError(f"unknown event mode {mode!r}")
        if mode == "relative" and (window_ms is None or window_ms <= 0):
            raise ValueError("relative events need a positive window")
        self.db.events[event_id] = {
            "subject": subject, "mode": mode, "ceiling": ceiling,
            "window_ms": window_ms, "fired_at": None, "armed": True,
            "fired_count": 0,
        }
        self._event_history[event_id] = []

    def _events_tick(self) -> None:
        if self.alive:
            self.evaluate_events()
        self.sim.schedule(self.sim.now + EVENTS_PERIOD_MS, self._events_tick)

    def evaluate_events(self) -> list[str]:
        """Evaluate registered thresholds; fired event ids are returned.

        An event fires once per excursion: it re-arms only after the value
        falls back to the ceiling or below.
        """
        fired = []
        now = self.sim.now
        for event_id in sorted(self.db.events):
            cfg = self.db.events[event_id]
            value = self.sim.network.counters.get(cfg["subject"], 0)
            if cfg["mode"] == "relative":
                history = self._event_history[event_id]
                history.append((now, value))
                cutoff = now - cfg["window_ms"]
                baseline = history[0][1]
                while len(history) >= 2 and history[1][0] <= cutoff:
                    history.pop(0)
                if history[0][0] <= cutoff:
                    baseline = history[0][1]
                over = (value - baseline) > cfg["ceiling"]
            else:
                over = value > cfg["ceiling"]
            if over and cfg["armed"]:
                cfg["armed"] = False
                cfg["fired_at"] = now
                cfg["fired_count"] += 1
                fired.append(event_id)
                self.log_ctrl("event-fired", f"{event_id} subject={cfg['subject']}")
                subject = cfg["subject"]
                if subject.startswith("drop:"):
                    self.handle_link_event(subject[5:], impaired=True)
            elif not over and not cfg["armed"]:
                cfg["armed"] = True
                subject = cfg["subject"]
                if subject.startswith("drop:"):
                    self.impaired_links.discard(subject[5:])
        return fired

    # -- failure handling ---------------------------------------------------------------

    def handle_link_event(self, link_id: str, impaired: bool = False) -> None:
        """Recompute flows riding a dead or impaired link; stop what cannot fit."""
        if impaired:
            self.impaired_links.add(link_id)
        dirs = self._direction_keys_of(link_id)
        affected = [
            r for r in self.db.committed_reservations()
            if r.flow.id in self.initiated
            and any(d in r.per_link_holds for d in dirs)
        ]
        for reservation in sorted(affected, key=lambda r: (-r.flow.priority, r.flow.id)):
            self._reroute_flow(reservation)

    def _direction_keys_of(self, link_id: str) -> list[str]:
        link = self.db.links.get(link_id)
        if link is not None:
            return list(link.direction_keys())
        rec = self.merged_inter_domain_links().get(link_id)
        if rec is None:
            return []
        return [f"{rec['a']}>{rec['b']}", f"{rec['b']}>{rec['a']}"]

    def _reroute_flow(self, reservation: Reservation) -> None:
        flow = reservation.flow
        path = self.compute_path(flow, exclude_flow=flow.id)
        if path is None:
            self.log_ctrl("flow-stop", f"{flow.id} no feasible path")
            self.teardown_flow(flow.id)
            meta = self.flow_meta.get(flow.id)
            if meta is not None:
                meta["status"] = "stopped"
            return
        self.log_ctrl("reroute", f"{flow.id} to {'>'.join(path.domain_sequence)}")
        self._initiate_update(flow, path, install_now=True)

    def on_remote_link_down(self, link_id: str) -> None:
        self.handle_link_event(link_id)

    # -- messenger / host callbacks --------------------------------------------------------

    def on_peering_up(self, peer: str, link: LinkSpec) -> None:
        self.connectivity_agent.maybe_advertise()
        self.reachability_agent.announce_all()

    def on_peer_down(self, peer: str, link: LinkSpec, reason: str) -> None:
        self.db.purge_domain(peer)
        self.log_ctrl("mitigate", f"peer={peer} reason={reason}")
        self.connectivity_agent.maybe_advertise()
        self.handle_link_event(link.link_id)

    def on_host_attached(self, host: str, attach: Endpoint) -> None:
        self.db.local_hosts[host] = attach
        self.db.upsert_host(host, self.domain)
        self.sim.network.install_rule(
            ForwardingRule(attach.node, host, attach.port, self.sim.now))
        self.log_ctrl("host-attach", f"{host} at {attach}")
        self.reachability_agent.announce(added=[host])

    def on_host_detached(self, host: str, old_attach: Endpoint) -> None:
        self.db.local_hosts.pop(host, None)
        self.db.remove_host(host, only_if_domain=self.domain)
        self.sim.network.remove_rule(old_attach.node, host)
        self.log_ctrl("host-detach", f"{host} from {old_attach}")
        self.reachability_agent.announce(removed=[host])

    def on_host_migrated(self, host: str, old_domain: str, new_domain: str) -> None:
        """A learned host moved; immediately rewrite rules of flows toward it."""
        for reservation in self.db.committed_reservations():
            flow = reservation.flow
            if flow.dst != host or flow.id not in self.initiated:
                continue
            path = self.compute_path(flow, exclude_flow=flow.id)
            if path is None:
                self.log_ctrl("host-rewrite-fail", f"{flow.id} toward {host}")
                continue
            self.log_ctrl("host-rewrite",
                          f"{flow.id} toward {host} via {'>'.join(path.domain_sequence)}")
            self._initiate_update(flow, path, install_now=True)

    def on_packet_in(self, flow: FlowSpec) -> None:
        if not self.alive:
            return
        meta = self.flow_meta.get(flow.id)
        if meta is not None and meta["status"] != "retry":
            return
        self.admit_service(flow, "packet-in")
