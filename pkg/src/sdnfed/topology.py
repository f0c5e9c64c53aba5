"""Topology document parser.

Grammar, one statement per line (``#`` starts a comment):

    domain <ID>
    switch <domain> <n>
    host <addr> at <domain>.<n>:<port>
    link <domain>.<n>:<port> <domain>.<n>:<port> latency=<ms> capacity=<mbps> [loss=<f>] [weak]

Dangling references and malformed lines are collected as line-numbered
diagnostics instead of raising, so a caller can show all problems at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Endpoint, LinkSpec, NodeId, check_identifier


@dataclass
class Diagnostic:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class Topology:
    domains: list[str] = field(default_factory=list)
    switches: list[NodeId] = field(default_factory=list)
    hosts: dict[str, Endpoint] = field(default_factory=dict)
    links: list[LinkSpec] = field(default_factory=list)

    def link_by_id(self, link_id: str) -> LinkSpec | None:
        for link in self.links:
            if link.link_id == link_id:
                return link
        return None


@dataclass
class ParseResult:
    topology: Topology | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def _parse_kv(tokens: list[str], lineno: int, diags: list[Diagnostic]) -> dict:
    out = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if sep:
            out[key] = value
        else:
            out[token] = True
    return out


def parse_topology(text: str) -> ParseResult:
    topo = Topology()
    diags: list[Diagnostic] = []
    used_ports: dict[str, int] = {}

    def complain(lineno: int, message: str) -> None:
        diags.append(Diagnostic(lineno, message))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        keyword = tokens[0]

        if keyword == "domain":
            if len(tokens) != 2:
                complain(lineno, "expected: domain <ID>")
                continue
            try:
                name = check_identifier(tokens[1], "domain id")
            except ValueError as exc:
                complain(lineno, str(exc))
                continue
            if name in topo.domains:
                complain(lineno, f"duplicate domain {name}")
                continue
            topo.domains.append(name)

        elif keyword == "switch":
            if len(tokens) != 3 or not tokens[2].isdigit():
                complain(lineno, "expected: switch <domain> <n>")
                continue
            if tokens[1] not in topo.domains:
                complain(lineno, f"unknown domain {tokens[1]}")
                continue
            node = NodeId(tokens[1], int(tokens[2]))
            if node in topo.switches:
                complain(lineno, f"duplicate switch {node}")
                continue
            topo.switches.append(node)

        elif keyword == "host":
            if len(tokens) != 4 or tokens[2] != "at":
                complain(lineno, "expected: host <addr> at <domain>.<n>:<port>")
                continue
            try:
                address = check_identifier(tokens[1], "host address")
                attach = Endpoint.parse(tokens[3])
            except ValueError as exc:
                complain(lineno, str(exc))
                continue
            if address in topo.hosts:
                complain(lineno, f"duplicate host address {address}")
                continue
            if attach.node not in topo.switches:
                complain(lineno, f"unknown switch {attach.node}")
                continue
            if str(attach) in used_ports:
                complain(lineno, f"port {attach} already used on line {used_ports[str(attach)]}")
                continue
            used_ports[str(attach)] = lineno
            topo.hosts[address] = attach

        elif keyword == "link":
            if len(tokens) < 3:
                complain(lineno, "expected: link <endpoint> <endpoint> latency=<ms> capacity=<mbps>")
                continue
            try:
                a = Endpoint.parse(tokens[1])
                b = Endpoint.parse(tokens[2])
            except ValueError as exc:
                complain(lineno, str(exc))
                continue
            bad_node = next((ep.node for ep in (a, b) if ep.node not in topo.switches), None)
            if bad_node is not None:
                complain(lineno, f"unknown switch {bad_node}")
                continue
            taken = next((ep for ep in (a, b) if str(ep) in used_ports), None)
            if taken is not None:
                complain(lineno, f"port {taken} already used on line {used_ports[str(taken)]}")
                continue
            kv = _parse_kv(tokens[3:], lineno, diags)
            unknown = set(kv) - {"latency", "capacity", "loss", "weak"}
            if unknown:
                complain(lineno, f"unknown link attribute(s): {', '.join(sorted(unknown))}")
                continue
            if "latency" not in kv or "capacity" not in kv:
                complain(lineno, "links require latency=<ms> and capacity=<mbps>")
                continue
            try:
                kind = "intra" if a.node.domain == b.node.domain else "peering"
                link = LinkSpec(
                    a=a, b=b,
                    latency_ms=float(kv["latency"]),
                    capacity_mbps=float(kv["capacity"]),
                    loss_rate=float(kv.get("loss", 0.0)),
                    kind=kind,
                    weak_flag=bool(kv.get("weak", False)),
                )
            except ValueError as exc:
                complain(lineno, str(exc))
                continue
            used_ports[str(a)] = lineno
            used_ports[str(b)] = lineno
            topo.links.append(link)

        else:
            complain(lineno, f"unknown keyword {keyword!r}")

    if not diags and not topo.domains:
        complain(0, "topology declares no domains")
    return ParseResult(topo if not diags else None, diags)
