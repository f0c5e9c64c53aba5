"""Shared domain types and the per-controller extended database.

Every other module enriches or consults :class:`ExtendedDatabase`: local
topology, the learned inter-domain graph, host locations, monitoring samples
and resource reservations.  One database instance belongs to exactly one
domain controller and is only mutated from that controller's event handlers,
so no locking is needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

IDENT_FORBIDDEN = ".*-:|>"


class UnknownLinkError(KeyError):
    """An operation referenced a link this database does not know about."""


def check_identifier(name: str, what: str = "identifier") -> str:
    """Validate a domain/host identifier against the topic and key grammar."""
    if not name:
        raise ValueError(f"{what} must be non-empty")
    for ch in name:
        if ch in IDENT_FORBIDDEN or ch.isspace() or not ch.isprintable():
            raise ValueError(f"{what} {name!r} may not contain {ch!r}")
    return name


def canonical_json(obj) -> str:
    """Canonical textual serialization: sorted keys, no whitespace.

    Used for bus payloads, byte accounting and database snapshots, so the
    same state always serializes to the same bytes.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True, order=True)
class NodeId:
    """A switch, identified by owning domain and a local index."""

    domain: str
    local: int

    def __str__(self) -> str:
        return f"{self.domain}.{self.local}"

    @classmethod
    def parse(cls, text: str) -> "NodeId":
        domain, _, local = text.rpartition(".")
        if not domain or not local.isdigit():
            raise ValueError(f"bad switch reference {text!r}, expected <domain>.<n>")
        return cls(domain, int(local))


@dataclass(frozen=True, order=True)
class Endpoint:
    """One side of a link or a host attachment point: a switch plus a port."""

    node: NodeId
    port: int

    def __str__(self) -> str:
        return f"{self.node}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        node, _, port = text.rpartition(":")
        if not node or not port.isdigit():
            raise ValueError(f"bad endpoint {text!r}, expected <domain>.<n>:<port>")
        return cls(NodeId.parse(node), int(port))


@dataclass
class LinkSpec:
    """A bidirectional link; both directions share latency and capacity.

    ``kind`` is ``intra`` when both endpoints share a domain and ``peering``
    otherwise.  The undirected figure convention is expanded internally to
    two directed entries (the direction keys), because latency and residual
    bandwidth are tracked one-way.
    """

    a: Endpoint
    b: Endpoint
    latency_ms: float
    capacity_mbps: float
    loss_rate: float = 0.0
    kind: str = "intra"
    weak_flag: bool = False

    def __post_init__(self):
        if self.latency_ms <= 0:
            raise ValueError(f"link {self.link_id}: latency must be > 0")
        if self.capacity_mbps <= 0:
            raise ValueError(f"link {self.link_id}: capacity must be > 0")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError(f"link {self.link_id}: loss rate must be in [0,1]")
        same_domain = self.a.node.domain == self.b.node.domain
        if self.kind == "peering" and same_domain:
            raise ValueError(f"link {self.link_id}: peering endpoints share a domain")
        if self.kind == "intra" and not same_domain:
            raise ValueError(f"link {self.link_id}: intra endpoints span two domains")

    @property
    def link_id(self) -> str:
        lo, hi = sorted((self.a, self.b))
        return f"{lo}-{hi}"

    @property
    def domains(self) -> tuple[str, str]:
        return (self.a.node.domain, self.b.node.domain)

    def direction_keys(self) -> tuple[str, str]:
        return (f"{self.a}>{self.b}", f"{self.b}>{self.a}")

    def endpoint_in(self, domain: str) -> Endpoint:
        if self.a.node.domain == domain:
            return self.a
        if self.b.node.domain == domain:
            return self.b
        raise ValueError(f"link {self.link_id} has no endpoint in {domain}")

    def other_end(self, ep: Endpoint) -> Endpoint:
        return self.b if ep == self.a else self.a


def direction_key(src: Endpoint, dst: Endpoint) -> str:
    return f"{src}>{dst}"


@dataclass(frozen=True)
class FlowSpec:
    """Identity and requirements of one end-to-end flow."""

    id: str
    src: str
    dst: str
    priority: int
    bandwidth_mbps: float
    max_latency_ms: Optional[float] = None

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"flow {self.id}: src and dst must differ")
        if self.bandwidth_mbps <= 0:
            raise ValueError(f"flow {self.id}: bandwidth must be > 0")
        if self.max_latency_ms is not None and self.max_latency_ms <= 0:
            raise ValueError(f"flow {self.id}: latency ceiling must be > 0")

    def to_payload(self) -> dict:
        return {
            "id": self.id,
            "src": self.src,
            "dst": self.dst,
            "priority": self.priority,
            "bandwidth_mbps": self.bandwidth_mbps,
            "max_latency_ms": self.max_latency_ms,
        }

    @classmethod
    def from_payload(cls, data: dict) -> "FlowSpec":
        return cls(
            id=data["id"],
            src=data["src"],
            dst=data["dst"],
            priority=int(data["priority"]),
            bandwidth_mbps=float(data["bandwidth_mbps"]),
            max_latency_ms=data.get("max_latency_ms"),
        )


PENDING = "pending"
COMMITTED = "committed"
RELEASED = "released"


@dataclass
class Reservation:
    """Committed or in-flight resource holds for one flow along a domain path.

    ``per_link_holds`` maps direction keys to reserved mbps; every value
    equals the flow's demand.  A controller stores holds for the links it is
    responsible for plus, when it initiated the reservation, the peering
    links of the whole path (its aggregated planning view).
    """

    flow: FlowSpec
    domain_path: list[str]
    per_link_holds: dict[str, float] = field(default_factory=dict)
    state: str = PENDING

    def __post_init__(self):
        if len(set(self.domain_path)) != len(self.domain_path):
            raise ValueError(f"reservation {self.flow.id}: domain path repeats a domain")
        for key, mbps in self.per_link_holds.items():
            if mbps != self.flow.bandwidth_mbps:
                raise ValueError(
                    f"reservation {self.flow.id}: hold on {key} is {mbps}, "
                    f"expected {self.flow.bandwidth_mbps}"
                )


@dataclass(frozen=True)
class MonitoringSample:
    """One measurement of a transit pair or a peering link.

    ``pair`` holds the ingress and egress link ids of the reporting domain;
    a pair of identical ids denotes the peering link itself as measured by
    ping.  ``latency_ms`` is ``inf`` when the measured path is currently
    unusable.
    """

    reporter: str
    pair: tuple[str, str]
    available_mbps: float
    latency_ms: float
    timestamp: float

    def key(self) -> str:
        return f"{self.reporter}|{self.pair[0]}|{self.pair[1]}"

    def to_payload(self) -> dict:
        return {
            "pair": list(self.pair),
            "available_mbps": self.available_mbps,
            "latency_ms": self.latency_ms,
            "timestamp": self.timestamp,
        }


class ExtendedDatabase:
    """Per-controller store of all intra-domain and learned network-wide state."""

    def __init__(self, domain: str):
        self.domain = check_identifier(domain, "domain id")
        self.switches: set[NodeId] = set()
        self.local_hosts: dict[str, Endpoint] = {}
        self.links: dict[str, LinkSpec] = {}
        self.link_up: dict[str, bool] = {}
        # advertiser domain -> link id -> advertised peering record
        self.domain_graph: dict[str, dict[str, dict]] = {}
        self.host_map: dict[str, str] = {}
        # sample key -> (sample, advertised period in ms)
        self.monitoring: dict[str, tuple[MonitoringSample, float]] = {}
        self.reservations: dict[str, Reservation] = {}
        # event id -> threshold configuration and firing state (plain dicts,
        # managed by the events processor)
        self.events: dict[str, dict] = {}

    # -- topology ---------------------------------------------------------

    def add_switch(self, node: NodeId) -> None:
        self.switches.add(node)

    def add_link(self, link: LinkSpec) -> None:
        self.links[link.link_id] = link
        self.link_up.setdefault(link.link_id, True)

    def set_link_up(self, link_id: str, up: bool) -> None:
        if link_id not in self.links:
            raise UnknownLinkError(link_id)
        self.link_up[link_id] = up

    def peering_links(self) -> list[LinkSpec]:
        return sorted(
            (l for l in self.links.values() if l.kind == "peering"),
            key=lambda l: l.link_id,
        )

    def intra_links(self) -> list[LinkSpec]:
        return sorted(
            (l for l in self.links.values() if l.kind == "intra"),
            key=lambda l: l.link_id,
        )

    def find_link_for_direction(self, dirkey: str) -> Optional[LinkSpec]:
        src, _, dst = dirkey.partition(">")
        for link in self.links.values():
            if {str(link.a), str(link.b)} == {src, dst}:
                return link
        return None

    # -- host reachability --------------------------------------------------

    def upsert_host(self, host: str, domain: str) -> Optional[str]:
        """Map a host to a domain, returning the prior mapping if any.

        A non-None return value that differs from ``domain`` is the
        migration signal remote controllers react to.
        """
        previous = self.host_map.get(host)
        self.host_map[host] = domain
        return previous

    def remove_host(self, host: str, only_if_domain: Optional[str] = None) -> bool:
        current = self.host_map.get(host)
        if current is None:
            return False
        if only_if_domain is not None and current != only_if_domain:
            return False
        del self.host_map[host]
        return True

    # -- monitoring ----------------------------------------------------------

    def record_sample(self, sample: MonitoringSample, period_ms: float) -> bool:
        """Store a sample unless a newer one is already held for its key."""
        key = sample.key()
        existing = self.monitoring.get(key)
        if existing is not None and existing[0].timestamp > sample.timestamp:
            return False
        self.monitoring[key] = (sample, period_ms)
        return True

    def latest_sample(self, reporter: str, pair: tuple[str, str]) -> Optional[MonitoringSample]:
        entry = self.monitoring.get(f"{reporter}|{pair[0]}|{pair[1]}")
        return entry[0] if entry else None

    def fresh_samples(self, now_ms: float, reporter: Optional[str] = None) -> list[MonitoringSample]:
        """Samples younger than three advertised periods, oldest rule first.

        Three periods mirrors the keep-alive miss budget: a reporter that
        skipped that many rounds is treated as silent.
        """
        out = []
        for sample, period in self.monitoring.values():
            if reporter is not None and sample.reporter != reporter:
                continue
            if now_ms - sample.timestamp <= 3 * period:
                out.append(sample)
        return sorted(out, key=lambda s: s.key())

    def purge_domain(self, domain: str) -> None:
        """Drop everything learned from one domain (failure mitigation)."""
        self.domain_graph.pop(domain, None)
        for key in [k for k, (s, _) in self.monitoring.items() if s.reporter == domain]:
            del self.monitoring[key]
        for host in [h for h, d in self.host_map.items() if d == domain]:
            del self.host_map[host]

    # -- reservations ---------------------------------------------------------

    def residual_bandwidth(self, dirkey: str, min_priority: Optional[int] = None,
                           exclude_flow: Optional[str] = None) -> float:
        """Capacity of a link direction minus committed holds, never negative.

        ``min_priority`` restricts the subtraction to holds of flows at or
        above that priority (the view preemption planning needs);
        ``exclude_flow`` leaves one flow's own holds out, which is how a
        reroute credits itself with the capacity it already occupies.
        """
        capacity = self._direction_capacity(dirkey)
        held = 0.0
        for res in self.reservations.values():
            if res.state != COMMITTED:
                continue
            if min_priority is not None and res.flow.priority < min_priority:
                continue
            if exclude_flow is not None and res.flow.id == exclude_flow:
                continue
            held += res.per_link_holds.get(dirkey, 0.0)
        return max(0.0, capacity - held)

    def _direction_capacity(self, dirkey: str) -> float:
        link = self.find_link_for_direction(dirkey)
        if link is not None:
            return link.capacity_mbps
        src, _, dst = dirkey.partition(">")
        for records in self.domain_graph.values():
            for rec in records.values():
                if {rec["a"], rec["b"]} == {src, dst}:
                    return float(rec["capacity_mbps"])
        raise UnknownLinkError(dirkey)

    def committed_reservations(self) -> list[Reservation]:
        return sorted(
            (r for r in self.reservations.values() if r.state == COMMITTED),
            key=lambda r: r.flow.id,
        )

    def oversubscribed_directions(self) -> list[str]:
        """Direction keys where committed holds exceed capacity (should be empty)."""
        held: dict[str, float] = {}
        for res in self.committed_reservations():
            for key, mbps in res.per_link_holds.items():
                held[key] = held.get(key, 0.0) + mbps
        bad = []
        for key, total in held.items():
            try:
                capacity = self._direction_capacity(key)
            except UnknownLinkError:
                continue
            if total > capacity + 1e-9:
                bad.append(key)
        return sorted(bad)

    # -- snapshot ---------------------------------------------------------------

    def snapshot(self) -> str:
        """Canonical key-sorted document of the full state, for golden tests."""
        doc = {
            "domain": self.domain,
            "switches": sorted(str(s) for s in self.switches),
            "local_hosts": {h: str(ep) for h, ep in self.local_hosts.items()},
            "links": {
                lid: {
                    "a": str(l.a),
                    "b": str(l.b),
                    "latency_ms": l.latency_ms,
                    "capacity_mbps": l.capacity_mbps,
                    "loss_rate": l.loss_rate,
                    "kind": l.kind,
                    "weak": l.weak_flag,
                    "up": self.link_up.get(lid, True),
                }
                for lid, l in sorted(self.links.items())
            },
            "domain_graph": {
                adv: {lid: rec for lid, rec in sorted(records.items())}
                for adv, records in sorted(self.domain_graph.items())
            },
            "host_map": dict(sorted(self.host_map.items())),
            "monitoring": {
                key: {
                    "available_mbps": s.available_mbps,
                    "latency_ms": s.latency_ms,
                    "timestamp": s.timestamp,
                    "period_ms": period,
                }
                for key, (s, period) in sorted(self.monitoring.items())
            },
            "reservations": {
                fid: {
                    "flow": r.flow.to_payload(),
                    "domain_path": r.domain_path,
                    "holds": dict(sorted(r.per_link_holds.items())),
                    "state": r.state,
                }
                for fid, r in sorted(self.reservations.items())
            },
            "events": {eid: cfg for eid, cfg in sorted(self.events.items())},
        }
        return canonical_json(doc)


def unconstrained() -> float:
    """Bandwidth value meaning 'no interior constraint' for empty transit paths."""
    return math.inf
