"""Bandwidth-constrained least-latency path search.

Latency is the single optimization metric; bandwidth acts purely as a
pruning constraint (edges offering less than the demand are removed before
the search).  Ties are broken by hop count, then by the lexicographic node
sequence, so identical inputs always yield the identical path.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Edge:
    """Directed graph edge with latency cost and residual bandwidth."""

    src: str
    dst: str
    latency_ms: float
    available_mbps: float
    ref: tuple = ()

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError(f"edge {self.src}>{self.dst}: negative latency")


@dataclass
class PathFound:
    nodes: list[str]
    edges: list[Edge]
    latency_ms: float
    bottleneck_mbps: float


def shortest_feasible_path(
    edges: list[Edge],
    src: str,
    dst: str,
    demand_mbps: float = 0.0,
    max_latency_ms: Optional[float] = None,
) -> Optional[PathFound]:
    """Least-latency path among edges with enough residual bandwidth.

    Returns None when no path survives the bandwidth pruning or the best
    path exceeds the latency ceiling.
    """
    usable: dict[str, list[Edge]] = {}
    for edge in sorted(edges, key=lambda e: (e.src, e.dst, e.latency_ms, e.ref)):
        if edge.available_mbps + 1e-9 < demand_mbps:
            continue
        usable.setdefault(edge.src, []).append(edge)

    if src == dst:
        return PathFound([src], [], 0.0, float("inf"))

    # heap entries: (latency, hops, node sequence)
    heap: list[tuple[float, int, tuple[str, ...]]] = [(0.0, 0, (src,))]
    finalized: set[str] = set()
    best_edges: dict[tuple[str, ...], list[Edge]] = {(src,): []}

    while heap:
        latency, hops, nodes = heapq.heappop(heap)
        node = nodes[-1]
        if node in finalized:
            continue
        finalized.add(node)
        path_edges = best_edges.pop(nodes)
        if node == dst:
            if max_latency_ms is not None and latency > max_latency_ms + 1e-9:
                return None
            bottleneck = min((e.available_mbps for e in path_edges), default=float("inf"))
            return PathFound(list(nodes), path_edges, latency, bottleneck)
        for edge in usable.get(node, ()):
            if edge.dst in finalized:
                continue
            candidate = nodes + (edge.dst,)
            if candidate in best_edges:
                continue
            best_edges[candidate] = path_edges + [edge]
            heapq.heappush(heap, (latency + edge.latency_ms, hops + 1, candidate))
    return None
