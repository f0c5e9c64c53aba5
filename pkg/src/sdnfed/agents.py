"""The four inter-domain agents bridging the bus and the extended database.

* Connectivity: event-driven advertisement of peering links.
* Monitoring: periodic transit-capability adverts with the adaptive policy
  (offload weak links via relays, or fall back to a slow 10 s period).
* Reachability: event-driven host presence adverts driving the host-domain
  map and migration rule rewrites.
* Reservation: hop-by-hop RSVP-style setup/teardown/update with rollback,
  plus preemption planning for priority requests.
"""

from __future__ import annotations

import itertools
from typing import Optional

from .messenger import GATE_CLOSED, GATE_LIMITED, BusMessage
from .model import COMMITTED, FlowSpec, MonitoringSample, Reservation

WEAK_LATENCY_MS = 50.0
PERIOD_NOMINAL_MS = 2000.0
PERIOD_WEAK_MS = 10000.0

NOMINAL = "nominal"
WEAK = "weak"


class ConnectivityAgent:
    """Shares the presence and health of this domain's peering links."""

    def __init__(self, controller):
        self.c = controller
        self.last_advertised: Optional[list[dict]] = None

    def subscribe(self) -> None:
        self.c.messenger.subscribe("connectivity.*.*", self.on_advert)

    def current_records(self) -> list[dict]:
        records = []
        for link in self.c.db.peering_links():
            far = link.other_end(link.endpoint_in(self.c.domain))
            records.append({
                "link": link.link_id,
                "a": str(link.a),
                "b": str(link.b),
                "neighbor": far.node.domain,
                "status": "up" if self.c.peering_effective_up(link) else "down",
                "latency_ms": link.latency_ms,
                "capacity_mbps": link.capacity_mbps,
                "weak": self.c.monitoring_agent.classify_link(link) == WEAK,
            })
        return records

    def maybe_advertise(self) -> None:
        """Publish only when something changed since the last advert."""
        records = self.current_records()
        if records == self.last_advertised:
            return
        self.last_advertised = records
        self.c.messenger.publish(
            f"connectivity.{self.c.domain}.update", {"peering": records}
        )

    def on_advert(self, msg: BusMessage) -> None:
        if msg.origin == self.c.domain:
            return
        old = self.c.db.domain_graph.get(msg.origin, {})
        new = {rec["link"]: rec for rec in msg.payload["peering"]}
        self.c.db.domain_graph[msg.origin] = new
        for link_id, rec in new.items():
            was_up = old.get(link_id, {}).get("status") == "up"
            if was_up and rec["status"] != "up":
                self.c.on_remote_link_down(link_id)


class MonitoringAgent:
    """Periodic transit metrics with weak-link offloading.

    Every evaluation round (the controller's 2 s agent tick) the agent
    classifies its peering links, derives a per-link plan, installs the
    matching relay gates on the messenger, and publishes the domain's
    transit samples over every link that is due.
    """

    def __init__(self, controller):
        self.c = controller
        self.last_sent: dict[str, float] = {}

    def subscribe(self) -> None:
        self.c.messenger.subscribe("monitoring.*.*", self.on_advert)

    def classify_link(self, link) -> str:
        if link.weak_flag:
            return WEAK
        sample = self.c.db.latest_sample(self.c.domain, (link.link_id, link.link_id))
        one_way = sample.latency_ms if sample is not None else link.latency_ms
        return WEAK if one_way >= WEAK_LATENCY_MS else NOMINAL

    def classify_links(self) -> dict[str, str]:
        return {l.link_id: self.classify_link(l) for l in self.c.db.peering_links()}

    def plan(self) -> dict[str, dict]:
        """Per up peering link: direct at 2 s, relay, or direct at 10 s."""
        plans = {}
        for link in self.c.db.peering_links():
            if not self.c.peering_effective_up(link):
                continue
            far = link.other_end(link.endpoint_in(self.c.domain)).node.domain
            if self.classify_link(link) == NOMINAL:
                plans[link.link_id] = {"mode": "direct", "period_ms": PERIOD_NOMINAL_MS}
            elif self.c.nominal_relay_exists(far, avoiding=link.link_id):
                plans[link.link_id] = {"mode": "relay", "period_ms": None}
            else:
                plans[link.link_id] = {"mode": "direct", "period_ms": PERIOD_WEAK_MS}
        return plans

    def tick(self) -> None:
        plans = self.plan()
        self._apply_gates(plans)
        self._publish_due(plans)

    def _apply_gates(self, plans: dict[str, dict]) -> None:
        for link in self.c.db.peering_links():
            plan = plans.get(link.link_id)
            if plan is None:
                self.c.messenger.set_gates(link.link_id, {})
            elif plan["mode"] == "relay":
                self.c.messenger.set_gates(link.link_id, {
                    "monitoring": GATE_CLOSED,
                    "connectivity": GATE_CLOSED,
                    "reachability": GATE_CLOSED,
                })
            elif plan["period_ms"] == PERIOD_WEAK_MS:
                self.c.messenger.set_gates(link.link_id, {"monitoring": GATE_LIMITED})
            else:
                self.c.messenger.set_gates(link.link_id, {})

    def _publish_due(self, plans: dict[str, dict]) -> None:
        now = self.c.sim.now
        due_by_period: dict[float, set[str]] = {}
        for link_id, plan in sorted(plans.items()):
            if plan["mode"] != "direct":
                continue
            period = plan["period_ms"]
            last = self.last_sent.get(link_id)
            if period > PERIOD_NOMINAL_MS and last is not None and now - last < period - 1e-9:
                continue
            due_by_period.setdefault(period, set()).add(link_id)
        if not due_by_period:
            return
        samples = [
            s.to_payload()
            for s in self.c.db.fresh_samples(now, reporter=self.c.domain)
            if s.pair[0] != s.pair[1]
        ]
        for period, link_ids in sorted(due_by_period.items()):
            self.c.messenger.publish(
                f"monitoring.{self.c.domain}.update",
                {"samples": samples, "period_ms": period},
                first_hop_links=link_ids,
            )
            for link_id in link_ids:
                self.last_sent[link_id] = now

    def on_advert(self, msg: BusMessage) -> None:
        if msg.origin == self.c.domain:
            return
        period = float(msg.payload["period_ms"])
        for raw in msg.payload["samples"]:
            sample = MonitoringSample(
                reporter=msg.origin,
                pair=(raw["pair"][0], raw["pair"][1]),
                available_mbps=raw["available_mbps"],
                latency_ms=raw["latency_ms"],
                timestamp=raw["timestamp"],
            )
            self.c.db.record_sample(sample, period)


class ReachabilityAgent:
    """Announces host presence and keeps the host-domain map converged."""

    def __init__(self, controller):
        self.c = controller

    def subscribe(self) -> None:
        self.c.messenger.subscribe("reachability.*.*", self.on_advert)

    def announce(self, added: list[str] = (), removed: list[str] = ()) -> None:
        added, removed = sorted(added), sorted(removed)
        if set(added) & set(removed):
            raise ValueError("a host cannot be both added and removed")
        if not added and not removed:
            return
        self.c.messenger.publish(
            f"reachability.{self.c.domain}.update",
            {"added": added, "removed": removed},
        )

    def announce_all(self) -> None:
        self.announce(added=sorted(self.c.db.local_hosts))

    def on_advert(self, msg: BusMessage) -> None:
        if msg.origin == self.c.domain:
            return
        for host in msg.payload["removed"]:
            self.c.db.remove_host(host, only_if_domain=msg.origin)
        for host in msg.payload["added"]:
            prior = self.c.db.upsert_host(host, msg.origin)
            if prior is not None and prior != msg.origin:
                self.c.on_host_migrated(host, prior, msg.origin)


class ReservationAgent:
    """Hop-by-hop reservation protocol over the ``<ID>.reserve.<verb>`` topics.

    A setup travels source to destination, staging pending holds at every
    domain; the last domain commits and answers with an accept that commits
    each hop on the way back.  Any hop may answer with a reject, which
    releases the pending holds upstream.  An update is a setup that replaces
    the flow's previous reservation on commit.
    """

    def __init__(self, controller):
        self.c = controller
        # (flow id, version) -> staged pending state at this domain
        self.pending: dict[tuple[str, int], dict] = {}
        self.committed_version: dict[str, int] = {}
        self._version_counter = 0

    def subscribe(self) -> None:
        self.c.messenger.subscribe(f"{self.c.domain}.*.*", self.on_direct)

    def next_version(self) -> int:
        self._version_counter += 1
        return self._version_counter

    def pending_held(self, dirkey: str, exclude_flow: Optional[str] = None) -> float:
        total = 0.0
        for (fid, _), entry in self.pending.items():
            if fid == exclude_flow:
                continue
            total += entry["holds"].get(dirkey, 0.0)
        return total

    # -- protocol messages ---------------------------------------------------

    def on_direct(self, msg: BusMessage) -> None:
        _, family, verb = msg.topic.split(".")
        if family != "reserve":
            return
        if verb in ("setup", "update"):
            self._handle_setup(msg.payload, verb)
        elif verb == "accept":
            self._handle_accept(msg.payload)
        elif verb == "reject":
            self._handle_reject(msg.payload)
        elif verb == "teardown":
            self._handle_teardown(msg.payload)

    def _send(self, to_domain: str, verb: str, payload: dict) -> None:
        self.c.messenger.publish(f"{to_domain}.reserve.{verb}", payload)

    def initiate(self, flow: FlowSpec, planned, kind: str, version: int) -> None:
        """Start a multi-domain setup/update from the source domain."""
        path = planned.domain_sequence
        holds = dict(planned.source_holds)
        for dirkey in planned.remote_peering_dirs:
            holds[dirkey] = flow.bandwidth_mbps
        self.pending[(flow.id, version)] = {
            "holds": holds,
            "rules": planned.source_rules,
            "path": path,
            "kind": kind,
        }
        self._send(path[1], kind, {
            "flow": flow.to_payload(),
            "domain_path": path,
            "peering_links": planned.peering_link_ids,
            "hop_index": 1,
            "accumulated_latency_ms": planned.source_latency_ms,
            "version": version,
        })

    def _handle_setup(self, p: dict, kind: str) -> None:
        flow = FlowSpec.from_payload(p["flow"])
        path = list(p["domain_path"])
        i = int(p["hop_index"])
        if i >= len(path) or path[i] != self.c.domain:
            return
        version = int(p["version"])
        staged = self.c.stage_reservation_segment(
            flow, path, list(p["peering_links"]), i,
            float(p["accumulated_latency_ms"]), kind,
        )
        if isinstance(staged, str):
            self.c.log_ctrl("reserve-reject", f"{flow.id} at hop {i}: {staged}")
            self._send(path[i - 1], "reject", {
                "flow": p["flow"], "domain_path": path, "hop_index": i - 1,
                "version": version, "reason": staged,
                "peering_links": p["peering_links"],
            })
            return
        entry = {"holds": staged["holds"], "rules": staged["rules"],
                 "path": path, "kind": kind}
        last_hop = i == len(path) - 1
        if last_hop:
            self._commit_local(flow, entry, version)
            self._send(path[i - 1], "accept", {
                "flow": p["flow"], "domain_path": path, "hop_index": i - 1,
                "version": version, "peering_links": p["peering_links"],
            })
        else:
            self.pending[(flow.id, version)] = entry
            self._send(path[i + 1], kind, {
                "flow": p["flow"], "domain_path": path,
                "peering_links": p["peering_links"], "hop_index": i + 1,
                "accumulated_latency_ms": staged["accumulated_latency_ms"],
                "version": version,
            })

    def _commit_local(self, flow: FlowSpec, entry: dict, version: int) -> None:
        # on an update this record replaces the flow's previous one, which
        # releases the old holds in the same step
        reservation = Reservation(
            flow=flow, domain_path=entry["path"],
            per_link_holds=dict(entry["holds"]), state=COMMITTED,
        )
        self.c.db.reservations[flow.id] = reservation
        self.committed_version[flow.id] = version
        self.c.apply_flow_rules(flow, entry["rules"])
        self.c.log_ctrl(
            "reserve-commit",
            f"{flow.id} path={'>'.join(entry['path'])} kind={entry['kind']} v={version}",
        )

    def _handle_accept(self, p: dict) -> None:
        flow = FlowSpec.from_payload(p["flow"])
        i = int(p["hop_index"])
        path = list(p["domain_path"])
        if path[i] != self.c.domain:
            return
        version = int(p["version"])
        entry = self.pending.pop((flow.id, version), None)
        if entry is None:
            return
        self._commit_local(flow, entry, version)
        if i > 0:
            self._send(path[i - 1], "accept", p | {"hop_index": i - 1})
        else:
            self.c.reservation_finished(flow, True, "committed", entry["kind"])

    def _handle_reject(self, p: dict) -> None:
        flow = FlowSpec.from_payload(p["flow"])
        i = int(p["hop_index"])
        path = list(p["domain_path"])
        if path[i] != self.c.domain:
            return
        version = int(p["version"])
        entry = self.pending.pop((flow.id, version), None)
        if i > 0:
            self._send(path[i - 1], "reject", p | {"hop_index": i - 1})
        elif entry is not None:
            self.c.reservation_finished(flow, False, p.get("reason", "rejected"), entry["kind"])

    def initiate_teardown(self, flow: FlowSpec, path: list[str], version: int) -> None:
        self.release_local(flow.id, version)
        if len(path) > 1:
            self._send(path[1], "teardown", {
                "flow": flow.to_payload(), "domain_path": path,
                "hop_index": 1, "version": version, "targeted": False,
            })

    def teardown_stale(self, flow: FlowSpec, domains: list[str], version: int) -> None:
        """Release an abandoned path's holds on domains the new path skips."""
        for domain in sorted(domains):
            self._send(domain, "teardown", {
                "flow": flow.to_payload(), "domain_path": [domain],
                "hop_index": 0, "version": version, "targeted": True,
            })

    def _handle_teardown(self, p: dict) -> None:
        flow = FlowSpec.from_payload(p["flow"])
        version = int(p["version"])
        path = list(p["domain_path"])
        i = int(p["hop_index"])
        if p.get("targeted"):
            self.release_local(flow.id, version)
            return
        if i >= len(path) or path[i] != self.c.domain:
            return
        self.release_local(flow.id, version)
        if i + 1 < len(path):
            self._send(path[i + 1], "teardown", p | {"hop_index": i + 1})

    def release_local(self, flow_id: str, version: int) -> None:
        self.pending.pop((flow_id, version), None)
        if self.committed_version.get(flow_id) == version:
            reservation = self.c.db.reservations.pop(flow_id, None)
            del self.committed_version[flow_id]
            if reservation is not None:
                self.c.remove_flow_rules(flow_id)
                self.c.log_ctrl("reserve-release", f"{flow_id} v={version}")

    # -- preemption -------------------------------------------------------------

    def plan_preemption(self, flow: FlowSpec):
        """Choose lower-priority victims to evict so ``flow`` fits.

        Victim subsets are tried smallest-first; within one size, candidates
        are ordered by (priority, flow id), so the selection is total and
        deterministic.  Every victim must have a reroute (drops are not
        allowed by policy), and reroutes may ignore the victim's latency
        ceiling but never capacity.
        """
        desired = self.c.compute_path(flow, min_priority=flow.priority)
        if desired is None:
            return None
        deficits: dict[str, float] = {}
        for dirkey in desired.constrained_dirs:
            residual = self.c.residual(dirkey)
            if residual + 1e-9 < flow.bandwidth_mbps:
                deficits[dirkey] = flow.bandwidth_mbps - residual
        if not deficits:
            return {"desired": desired, "victims": []}

        candidates = [
            r for r in self.c.db.committed_reservations()
            if r.flow.priority < flow.priority
            and r.flow.id in self.c.initiated
            and any(d in r.per_link_holds for d in deficits)
        ]
        candidates.sort(key=lambda r: (r.flow.priority, r.flow.id))
        chosen = None
        for size in range(1, len(candidates) + 1):
            for combo in itertools.combinations(candidates, size):
                if all(
                    sum(r.per_link_holds.get(d, 0.0) for r in combo) + 1e-9
                    >= deficit
                    for d, deficit in deficits.items()
                ):
                    chosen = list(combo)
                    break
            if chosen:
                break
        if not chosen:
            return None

        extra = {d: flow.bandwidth_mbps for d in desired.constrained_dirs}
        for victim in chosen:
            relaxed = FlowSpec(
                id=victim.flow.id, src=victim.flow.src, dst=victim.flow.dst,
                priority=victim.flow.priority,
                bandwidth_mbps=victim.flow.bandwidth_mbps, max_latency_ms=None,
            )
            alt = self.c.compute_path(relaxed, exclude_flow=victim.flow.id, extra_holds=extra)
            if alt is None:
                return None
        return {"desired": desired, "victims": [r.flow.id for r in chosen]}
