import pytest

from sdnfed.model import (
    COMMITTED,
    Endpoint,
    ExtendedDatabase,
    FlowSpec,
    LinkSpec,
    MonitoringSample,
    Reservation,
    UnknownLinkError,
    check_identifier,
)


def make_link(capacity=10.0, latency=10.0):
    return LinkSpec(
        a=Endpoint.parse("A.0:1"), b=Endpoint.parse("C.0:1"),
        latency_ms=latency, capacity_mbps=capacity, kind="peering",
    )


def committed(flow_id, dirkey, mbps, priority=1):
    flow = FlowSpec(id=flow_id, src="x", dst="y", priority=priority, bandwidth_mbps=mbps)
    return Reservation(flow=flow, domain_path=["A", "C"],
                       per_link_holds={dirkey: mbps}, state=COMMITTED)


class TestHostMapping:
    def test_first_insert_returns_none(self):
        db = ExtendedDatabase("A")
        assert db.upsert_host("h2", "C") is None
        assert db.host_map["h2"] == "C"

    def test_migration_returns_prior_domain(self):
        db = ExtendedDatabase("A")
        db.upsert_host("h2", "C")
        assert db.upsert_host("h2", "B") == "C"
        assert db.host_map["h2"] == "B"

    def test_idempotent_reinsert(self):
        db = ExtendedDatabase("A")
        db.upsert_host("h2", "B")
        assert db.upsert_host("h2", "B") == "B"
        assert db.upsert_host("h2", "B") == "B"

    def test_at_most_one_domain_per_host(self):
        db = ExtendedDatabase("A")
        for domain in ("A", "B", "C", "B"):
            db.upsert_host("h", domain)
            assert list(db.host_map.keys()).count("h") == 1

    def test_conditional_removal(self):
        db = ExtendedDatabase("A")
        db.upsert_host("h", "B")
        assert not db.remove_host("h", only_if_domain="C")
        assert db.host_map["h"] == "B"
        assert db.remove_host("h", only_if_domain="B")
        assert "h" not in db.host_map


class TestResidualBandwidth:
    def test_no_reservations_full_capacity(self):
        db = ExtendedDatabase("A")
        link = make_link(capacity=10.0)
        db.add_link(link)
        out, _ = link.direction_keys()
        assert db.residual_bandwidth(out) == 10.0

    def test_single_hold(self):
        db = ExtendedDatabase("A")
        link = make_link(capacity=10.0)
        db.add_link(link)
        out, _ = link.direction_keys()
        db.reservations["f1"] = committed("f1", out, 8.0)
        assert db.residual_bandwidth(out) == 2.0

    def test_matches_direct_subtraction_oracle(self):
        # oracle: capacity minus an explicit sum over the enumerated holds
        db = ExtendedDatabase("A")
        link = make_link(capacity=10.0)
        db.add_link(link)
        out, _ = link.direction_keys()
        holds = [8.0, 2.0]
        for i, mbps in enumerate(holds):
            db.reservations[f"f{i}"] = committed(f"f{i}", out, mbps)
        assert db.residual_bandwidth(out) == max(0.0, 10.0 - sum(holds)) == 0.0

    def test_never_negative(self):
        db = ExtendedDatabase("A")
        link = make_link(capacity=10.0)
        db.add_link(link)
        out, _ = link.direction_keys()
        db.reservations["f1"] = committed("f1", out, 9.0)
        db.reservations["f2"] = committed("f2", out, 9.0)
        assert db.residual_bandwidth(out) == 0.0

    def test_unknown_link_is_an_error(self):
        db = ExtendedDatabase("A")
        with pytest.raises(UnknownLinkError):
            db.residual_bandwidth("X.0:1>Y.0:1")

    def test_priority_and_flow_filters(self):
        db = ExtendedDatabase("A")
        link = make_link(capacity=10.0)
        db.add_link(link)
        out, _ = link.direction_keys()
        db.reservations["lo"] = committed("lo", out, 4.0, priority=1)
        db.reservations["hi"] = committed("hi", out, 3.0, priority=5)
        assert db.residual_bandwidth(out) == 3.0
        assert db.residual_bandwidth(out, min_priority=5) == 7.0
        assert db.residual_bandwidth(out, exclude_flow="lo") == 7.0


class TestMonitoringSamples:
    def sample(self, ts):
        return MonitoringSample(reporter="B", pair=("l1", "l2"),
                                available_mbps=5.0, latency_ms=6.0, timestamp=ts)

    def test_empty_lookup(self):
        db = ExtendedDatabase("A")
        assert db.latest_sample("B", ("l1", "l2")) is None

    def test_latest_timestamp_wins(self):
        db = ExtendedDatabase("A")
        db.record_sample(self.sample(2000.0), 2000.0)
        db.record_sample(self.sample(4000.0), 2000.0)
        assert db.latest_sample("B", ("l1", "l2")).timestamp == 4000.0

    def test_out_of_order_arrival_keeps_newest(self):
        # oracle: sort the arrivals by timestamp and keep the maximum
        arrivals = [4000.0, 2000.0]
        db = ExtendedDatabase("A")
        for ts in arrivals:
            db.record_sample(self.sample(ts), 2000.0)
        assert db.latest_sample("B", ("l1", "l2")).timestamp == max(arrivals)

    def test_staleness_is_three_periods(self):
        db = ExtendedDatabase("A")
        db.record_sample(self.sample(1000.0), 2000.0)
        assert db.fresh_samples(7000.0)  # age 6000 = 3 periods, still fresh
        assert not db.fresh_samples(7001.0)


class TestSnapshot:
    def test_identical_sequences_identical_snapshots(self):
        def build():
            db = ExtendedDatabase("A")
            link = make_link()
            db.add_link(link)
            db.upsert_host("h1", "B")
            db.upsert_host("h2", "C")
            out, _ = link.direction_keys()
            db.reservations["f"] = committed("f", out, 3.0)
            db.record_sample(MonitoringSample("B", ("l1", "l2"), 5.0, 6.0, 2000.0), 2000.0)
            return db
        assert build().snapshot() == build().snapshot()

    def test_snapshot_is_key_sorted(self):
        db = ExtendedDatabase("A")
        db.upsert_host("zz", "B")
        db.upsert_host("aa", "C")
        snap = db.snapshot()
        assert snap.index('"aa"') < snap.index('"zz"')


class TestValidation:
    def test_identifier_rejects_topic_chars(self):
        for bad in ("a.b", "a*b", "", "a b", "a-b"):
            with pytest.raises(ValueError):
                check_identifier(bad)

    def test_flow_spec_validation(self):
        with pytest.raises(ValueError):
            FlowSpec(id="f", src="h", dst="h", priority=1, bandwidth_mbps=1.0)
        with pytest.raises(ValueError):
            FlowSpec(id="f", src="a", dst="b", priority=1, bandwidth_mbps=0.0)
        with pytest.raises(ValueError):
            FlowSpec(id="f", src="a", dst="b", priority=1, bandwidth_mbps=1.0,
                     max_latency_ms=0.0)

    def test_link_spec_validation(self):
        with pytest.raises(ValueError):
            LinkSpec(a=Endpoint.parse("A.0:1"), b=Endpoint.parse("A.1:1"),
                     latency_ms=1.0, capacity_mbps=1.0, kind="peering")
        with pytest.raises(ValueError):
            LinkSpec(a=Endpoint.parse("A.0:1"), b=Endpoint.parse("B.1:1"),
                     latency_ms=1.0, capacity_mbps=1.0, kind="intra")

    def test_reservation_holds_must_equal_demand(self):
        flow = FlowSpec(id="f", src="a", dst="b", priority=1, bandwidth_mbps=4.0)
        with pytest.raises(ValueError):
            Reservation(flow=flow, domain_path=["A"], per_link_holds={"d": 3.0})
        with pytest.raises(ValueError):
            Reservation(flow=flow, domain_path=["A", "B", "A"], per_link_holds={})
