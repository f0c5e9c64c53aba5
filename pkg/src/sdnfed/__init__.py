"""Deterministic multi-domain SDN control-plane simulator.

Per-domain controllers coordinate over a federated publish/subscribe
channel carried by the peering links themselves; pluggable agents exchange
aggregated connectivity, monitoring, reachability and reservation state.
"""

__version__ = "0.1.0"

from .model import ExtendedDatabase, FlowSpec, LinkSpec, MonitoringSample, Reservation
from .sim import Simulation

__all__ = [
    "ExtendedDatabase",
    "FlowSpec",
    "LinkSpec",
    "MonitoringSample",
    "Reservation",
    "Simulation",
    "__version__",
]
