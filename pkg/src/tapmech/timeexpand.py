"""Time-expanded networks: one node copy per time step, waiting via holdover edges."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import NetworkError
from .network import UNBOUNDED, Edge, RoadNetwork, hop_diameter

HOLDOVER = -1


@dataclass(frozen=True)
class TimeExpandedNetwork:
    base: RoadNetwork
    horizon: int
    graph: RoadNetwork
    # expanded edge id -> (base edge id or HOLDOVER, departure time)
    origin: tuple[tuple[int, int], ...]
    # base edges with no movement copy (transit >= horizon)
    unusable: tuple[int, ...] = ()

    def node(self, v: int, t: int) -> int:
        if not 0 <= t < self.horizon:
            raise NetworkError(f"time {t} outside horizon {self.horizon}")
        return t * self.base.n_nodes + v

    def base_node(self, x: int) -> tuple[int, int]:
        t, v = divmod(x, self.base.n_nodes)
        return v, t

    @property
    def movement_edges(self) -> list[int]:
        return [i for i, (b, _) in enumerate(self.origin) if b != HOLDOVER]

    @property
    def holdover_edges(self) -> list[int]:
        return [i for i, (b, _) in enumerate(self.origin) if b == HOLDOVER]

    def copies(self, base_edge: int) -> list[int]:
        return [i for i, (b, _) in enumerate(self.origin) if b == base_edge]

    def project(self, edges) -> list[tuple[int, int]]:
        """Base-graph schedule ``[(base edge, departure time), ...]`` of an expanded path."""
        return [self.origin[e] for e in edges if self.origin[e][0] != HOLDOVER]

    def schedule_usage(self, paths) -> Counter:
        """Agents departing on each ``(base edge, time)`` across all ``paths``."""
        usage: Counter = Counter()
        for edges in paths:
            usage.update(self.project(edges))
        return usage

    def schedule_feasible(self, paths) -> bool:
        return all(n <= self.base.edges[e].capacity for (e, _), n in self.schedule_usage(paths).items())


def build_time_expanded(net: RoadNetwork, horizon: int) -> TimeExpandedNetwork:
    """Expand ``net`` over ``horizon`` discrete steps.

    Each base edge ``e`` gets ``horizon - transit(e)`` movement copies with
    the base capacity and weight; each node gets ``horizon - 1`` holdover
    edges of unbounded capacity and zero weight.  Edges too slow for the
    horizon are listed in ``unusable`` rather than rejected.
    """
    if horizon < 1:
        raise NetworkError("horizon must be >= 1")
    n = net.n_nodes
    names = [f"{name}@{t}" for t in range(horizon) for name in net.names]
    edges: list[Edge] = []
    origin: list[tuple[int, int]] = []
    unusable = []
    for eid, e in enumerate(net.edges):
        copies = horizon - e.transit
        if copies <= 0:
            unusable.append(eid)
            continue
        for t in range(copies):
            edges.append(Edge(t * n + e.tail, (t + e.transit) * n + e.head, e.capacity, e.weight, 0))
            origin.append((eid, t))
    for v in range(n):
        for t in range(horizon - 1):
            edges.append(Edge(t * n + v, (t + 1) * n + v, UNBOUNDED, 0.0, 0))
            origin.append((HOLDOVER, t))
    return TimeExpandedNetwork(net, horizon, RoadNetwork(names, edges), tuple(origin), tuple(unusable))


def default_horizon(net: RoadNetwork, n_agents: int) -> int:
    """agents x max transit x hop diameter, and never shorter than one edge traversal."""
    max_tau = max((e.transit for e in net.edges), default=0)
    guess = max(n_agents, 1) * max_tau * max(hop_diameter(net), 1)
    return max(guess, max_tau + 1, 1)


def expand_instance(instance, horizon: int | None = None):
    """Copy of ``instance`` routed on its time-expanded network.

    Agents start at ``(origin, 0)`` and finish at ``(destination, T-1)``;
    zero-weight holdovers make arrival time irrelevant to cost.
    """
    from .instance import AgentProfile, Instance

    horizon = horizon or default_horizon(instance.network, len(instance.agents))
    tx = build_time_expanded(instance.network, horizon)
    last = horizon - 1
    agents = [
        AgentProfile(
            a.name,
            tx.node(a.origin, 0),
            tx.node(a.destination, last),
            tx.node(a.declared, last),
        )
        for a in instance.agents
    ]
    meta = dict(instance.meta)
    meta["horizon"] = str(horizon)
    return Instance(tx.graph, agents, meta), tx
