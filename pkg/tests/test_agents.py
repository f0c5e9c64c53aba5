from conftest import booted, parse_ok
from sdnfed.agents import NOMINAL, PERIOD_NOMINAL_MS, PERIOD_WEAK_MS, WEAK
from sdnfed.model import COMMITTED, Endpoint, FlowSpec, Reservation
from sdnfed.scenario import REFERENCE_TOPOLOGY, REFERENCE_TOPOLOGY_WEAK

BOUNDARY_TOPOLOGY = REFERENCE_TOPOLOGY.replace(
    "link A.1:10 C.1:10 latency=10 capacity=10",
    "link A.1:10 C.1:10 latency=50 capacity=10",
)


def direct_link_id(ctl, neighbor):
    for link in ctl.db.peering_links():
        far = link.other_end(link.endpoint_in(ctl.domain)).node.domain
        if far == neighbor:
            return link.link_id
    raise AssertionError(f"no peering link toward {neighbor}")


class TestClassification:
    def test_nominal_and_flagged_weak(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY_WEAK), until_ms=2500.0)
        a = ctls["A"]
        classes = a.monitoring_agent.classify_links()
        assert classes[direct_link_id(a, "B")] == NOMINAL
        assert classes[direct_link_id(a, "C")] == WEAK

    def test_boundary_latency_is_weak(self):
        # exactly 50 ms one-way, no flag: still classified weak
        sim, ctls = booted(parse_ok(BOUNDARY_TOPOLOGY), until_ms=2500.0)
        a = ctls["A"]
        assert a.monitoring_agent.classify_links()[direct_link_id(a, "C")] == WEAK

    def test_ten_ms_link_is_nominal(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY), until_ms=2500.0)
        a = ctls["A"]
        assert a.monitoring_agent.classify_links()[direct_link_id(a, "C")] == NOMINAL


class TestMonitoringPlan:
    def test_weak_link_with_relay_is_suppressed(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY_WEAK), until_ms=4500.0)
        a = ctls["A"]
        plans = a.monitoring_agent.plan()
        assert plans[direct_link_id(a, "B")] == {"mode": "direct",
                                                 "period_ms": PERIOD_NOMINAL_MS}
        assert plans[direct_link_id(a, "C")]["mode"] == "relay"

    def test_weak_link_without_relay_degrades_to_slow_period(self):
        topo = parse_ok(REFERENCE_TOPOLOGY_WEAK)
        sim, ctls = booted(topo)
        bc = next(l for l in topo.links if l.kind == "peering"
                  and {d for d in l.domains} == {"B", "C"})
        sim.schedule(10000.0, lambda: sim.cut_link(bc.link_id))
        sim.run(16000.0)
        a = ctls["A"]
        plan = a.monitoring_agent.plan()[direct_link_id(a, "C")]
        assert plan == {"mode": "direct", "period_ms": PERIOD_WEAK_MS}

    def test_isolated_nominal_pair_sends_directly(self):
        from conftest import TWO_DOMAIN_TOPOLOGY
        sim, ctls = booted(parse_ok(TWO_DOMAIN_TOPOLOGY), until_ms=4500.0)
        a = ctls["A"]
        plan = a.monitoring_agent.plan()[direct_link_id(a, "B")]
        assert plan == {"mode": "direct", "period_ms": PERIOD_NOMINAL_MS}

    def test_advert_periods_are_always_legal(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY_WEAK), until_ms=20000.0)
        periods = set()
        for ctl in ctls.values():
            for sample, period in ctl.db.monitoring.values():
                if sample.reporter != ctl.domain:
                    periods.add(period)
        assert periods and periods <= {PERIOD_NOMINAL_MS, PERIOD_WEAK_MS}


class TestConnectivity:
    def test_bootstrap_triangle_learns_three_edges(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY), until_ms=4500.0)
        for ctl in ctls.values():
            merged = ctl.merged_inter_domain_links()
            up = [rec for rec in merged.values() if rec["up"]]
            assert len(up) == 3
            domains = {rec["dom_a"] for rec in merged.values()}
            domains |= {rec["dom_b"] for rec in merged.values()}
            assert domains == {"A", "B", "C"}

    def test_cut_edge_advertised_down_everywhere(self):
        topo = parse_ok(REFERENCE_TOPOLOGY)
        sim, ctls = booted(topo)
        bc = next(l for l in topo.links if l.kind == "peering"
                  and {d for d in l.domains} == {"B", "C"})
        sim.schedule(10000.0, lambda: sim.cut_link(bc.link_id))
        sim.run(16000.0)
        merged = ctls["A"].merged_inter_domain_links()
        assert merged[bc.link_id]["up"] is False

    def test_silent_when_nothing_changes(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY), until_ms=6000.0)
        mark = len(sim.trace.records)
        sim.run(20000.0)
        quiet = [d for t, k, s, d in sim.trace.records[mark:]
                 if k == "BUS" and (" connectivity" in d or " reachability" in d)]
        assert quiet == []


class TestReachability:
    def test_fresh_host_creates_mapping_without_rewrites(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY), until_ms=4500.0)
        sim.network.attach_host("newbie", Endpoint.parse("B.0:5"))
        mark = len(sim.trace.records)
        ctls["B"].on_host_attached("newbie", Endpoint.parse("B.0:5"))
        sim.run(6000.0)
        assert ctls["A"].db.host_map["newbie"] == "B"
        assert ctls["C"].db.host_map["newbie"] == "B"
        rewrites = [d for t, k, s, d in sim.trace.records[mark:]
                    if k == "CTRL" and "host-rewrite" in d]
        assert rewrites == []

    def test_host_maps_converge_after_migration(self):
        sim, ctls = booted(parse_ok(REFERENCE_TOPOLOGY), until_ms=4500.0)
        old = sim.network.hosts["h2"].attach
        sim.migrate_host("h2", Endpoint.parse("B.0:3"))
        ctls["C"].on_host_detached("h2", old)
        ctls["B"].on_host_attached("h2", Endpoint.parse("B.0:3"))
        sim.run(6000.0)
        assert all(ctl.db.host_map["h2"] == "B" for ctl in ctls.values())


class TestPreemptionPlanning:
    def settled(self):
        return booted(parse_ok(REFERENCE_TOPOLOGY), until_ms=4500.0)

    def inject(self, ctl, fid, bw, priority):
        flow = FlowSpec(id=fid, src="A1", dst="C1", priority=priority,
                        bandwidth_mbps=bw)
        holds = {"A.0:9>A.1:9": bw, "A.1:10>C.1:10": bw}
        ctl.db.reservations[fid] = Reservation(
            flow=flow, domain_path=["A", "C"], per_link_holds=holds,
            state=COMMITTED)
        ctl.initiated.add(fid)
        ctl.reservation_agent.committed_version[fid] = 1

    def priority_request(self, bw=8.0, pri=5):
        return FlowSpec(id="want", src="A2", dst="C2", priority=pri,
                        bandwidth_mbps=bw, max_latency_ms=15.0)

    def test_minimal_set_prefers_fewest_flows(self):
        # freeing 8 needs either {fa} (one 8 Mb flow) or {fb, ...}: the
        # single-flow set wins even though fb has the lower priority
        sim, ctls = self.settled()
        a = ctls["A"]
        self.inject(a, "fa", 8.0, priority=3)
        self.inject(a, "fb", 2.0, priority=1)
        plan = a.reservation_agent.plan_preemption(self.priority_request())
        assert plan is not None
        assert plan["victims"] == ["fa"]

    def test_ties_broken_by_lowest_priority(self):
        sim, ctls = self.settled()
        a = ctls["A"]
        self.inject(a, "fy", 5.0, priority=1)
        self.inject(a, "fz", 5.0, priority=2)
        plan = a.reservation_agent.plan_preemption(self.priority_request(bw=5.0))
        assert plan["victims"] == ["fy"]

    def test_ties_broken_by_flow_id(self):
        sim, ctls = self.settled()
        a = ctls["A"]
        self.inject(a, "fb", 5.0, priority=1)
        self.inject(a, "fa", 5.0, priority=1)
        plan = a.reservation_agent.plan_preemption(self.priority_request(bw=5.0))
        assert plan["victims"] == ["fa"]

    def test_equal_priority_cannot_be_preempted(self):
        sim, ctls = self.settled()
        a = ctls["A"]
        self.inject(a, "peer", 8.0, priority=5)
        assert a.reservation_agent.plan_preemption(self.priority_request(pri=5)) is None

    def test_victims_always_strictly_lower_priority(self):
        sim, ctls = self.settled()
        a = ctls["A"]
        self.inject(a, "lo", 4.0, priority=2)
        self.inject(a, "mid", 4.0, priority=4)
        self.inject(a, "hi", 2.0, priority=9)
        plan = a.reservation_agent.plan_preemption(self.priority_request(pri=5))
        assert plan is not None
        for victim in plan["victims"]:
            assert a.db.reservations[victim].flow.priority < 5

    def test_no_preemptable_set_fails(self):
        sim, ctls = self.settled()
        a = ctls["A"]
        self.inject(a, "hi1", 8.0, priority=9)
        assert a.reservation_agent.plan_preemption(self.priority_request(pri=5)) is None
