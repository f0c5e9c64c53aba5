import pytest

from sdnfed.harness import build_simulation
from sdnfed.scenario import REFERENCE_TOPOLOGY, REFERENCE_TOPOLOGY_WEAK, parse_scenario
from sdnfed.topology import parse_topology

TWO_DOMAIN_TOPOLOGY = """\
domain A
domain B
switch A 0
switch B 0
host a1 at A.0:1
host b1 at B.0:1
link A.0:2 B.0:2 latency=5 capacity=20
"""


def parse_ok(text: str):
    result = parse_topology(text)
    assert result.ok, result.diagnostics
    return result.topology


@pytest.fixture
def reference_topology():
    return parse_ok(REFERENCE_TOPOLOGY)


@pytest.fixture
def weak_topology():
    return parse_ok(REFERENCE_TOPOLOGY_WEAK)


@pytest.fixture
def two_domain_topology():
    return parse_ok(TWO_DOMAIN_TOPOLOGY)


def booted(topology, until_ms=0.0):
    """Build a simulation with booted controllers, optionally settled."""
    sim, controllers = build_simulation(topology)
    for domain in sorted(controllers):
        controllers[domain].boot()
    if until_ms:
        sim.run(until_ms)
    return sim, controllers


def scenario_from(text: str, topology_text: str):
    result = parse_scenario(
        text, topology_loader=lambda ref: topology_text if ref == "inline" else None)
    assert result.ok, result.diagnostics
    return result.scenario
