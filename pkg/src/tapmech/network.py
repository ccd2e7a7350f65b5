"""Road networks, residual capacities and capacity-aware shortest paths.

Nodes and edges are dense integers assigned in insertion order; external
node names live in ``RoadNetwork.names``.  Parallel edges are allowed and
are told apart by their edge id.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import NetworkError

WEIGHT_TOL = 1e-9
UNBOUNDED = math.inf


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    capacity: float
    weight: float
    transit: int = 0


class RoadNetwork:
    """Immutable directed graph with capacity, weight and transit time per edge."""

    def __init__(self, names: Sequence[str], edges: Iterable[Edge], symmetric: bool = False):
        self.names = tuple(str(n) for n in names)
        self.edges = tuple(edges)
        self.symmetric = bool(symmetric)
        if len(set(self.names)) != len(self.names):
            raise NetworkError("duplicate node name")
        self._index = {name: i for i, name in enumerate(self.names)}
        n = len(self.names)
        out_edges: list[list[int]] = [[] for _ in range(n)]
        in_edges: list[list[int]] = [[] for _ in range(n)]
        for eid, e in enumerate(self.edges):
            if not (0 <= e.tail < n and 0 <= e.head < n):
                raise NetworkError(f"edge {eid} has an undeclared endpoint")
            if e.tail == e.head:
                raise NetworkError(f"edge {eid} is a self-loop")
            if not e.capacity >= 1:
                raise NetworkError(f"edge {eid} has capacity {e.capacity} < 1")
            if not e.weight >= 0:
                raise NetworkError(f"edge {eid} has negative weight")
            if e.transit < 0 or int(e.transit) != e.transit:
                raise NetworkError(f"edge {eid} has invalid transit time")
            out_edges[e.tail].append(eid)
            in_edges[e.head].append(eid)
        self.out_edges = tuple(tuple(x) for x in out_edges)
        self.in_edges = tuple(tuple(x) for x in in_edges)
        self.has_zero_weight = any(e.weight <= WEIGHT_TOL for e in self.edges)
        if self.symmetric and not self.is_symmetric():
            raise NetworkError("network flagged symmetric but some edge lacks an equal reverse")

    @classmethod
    def from_named_edges(cls, names, edges, symmetric=False):
        """Build from ``(tail_name, head_name, capacity, weight[, transit])`` tuples.

        With ``symmetric=True`` each listed edge is followed by its reverse.
        """
        index = {str(n): i for i, n in enumerate(names)}
        built = []
        for spec in edges:
            tail, head, cap, w = spec[:4]
            tau = spec[4] if len(spec) > 4 else 0
            built.append(Edge(index[str(tail)], index[str(head)], cap, w, tau))
            if symmetric:
                built.append(Edge(index[str(head)], index[str(tail)], cap, w, tau))
        return cls(names, built, symmetric=symmetric)

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def index(self, name) -> int:
        try:
            return self._index[str(name)]
        except KeyError:
            raise NetworkError(f"unknown node {name!r}") from None

    def find_edges(self, tail, head) -> list[int]:
        """Edge ids from ``tail`` to ``head`` (node ids), in id order."""
        return [eid for eid in self.out_edges[tail] if self.edges[eid].head == head]

    def edge_by_names(self, tail: str, head: str) -> int:
        found = self.find_edges(self.index(tail), self.index(head))
        if not found:
            raise NetworkError(f"no edge {tail}->{head}")
        return found[0]

    def is_symmetric(self) -> bool:
        keys = {}
        for e in self.edges:
            key = (e.tail, e.head, e.capacity, e.weight, e.transit)
            keys[key] = keys.get(key, 0) + 1
        for (u, v, c, w, t), count in keys.items():
            if keys.get((v, u, c, w, t), 0) != count:
                return False
        return True

    def with_capacities(self, capacities: Sequence[float]) -> "RoadNetwork":
        edges = [Edge(e.tail, e.head, c, e.weight, e.transit) for e, c in zip(self.edges, capacities)]
        net = RoadNetwork(self.names, edges)
        net.symmetric = self.symmetric and net.is_symmetric()
        return net

    def path_nodes(self, edges: Sequence[int], origin: int | None = None) -> list[int]:
        if not edges:
            return [] if origin is None else [origin]
        nodes = [self.edges[edges[0]].tail]
        for eid in edges:
            nodes.append(self.edges[eid].head)
        return nodes

    def stats(self) -> dict:
        """|V|, |E|, mean out-degree and mean per-node outgoing capacity."""
        n = self.n_nodes
        outdeg = sum(len(x) for x in self.out_edges) / n if n else 0.0
        node_caps = [
            sum(self.edges[e].capacity for e in out) / len(out) for out in self.out_edges if out
        ]
        cap_avg = sum(node_caps) / len(node_caps) if node_caps else 0.0
        return {"nodes": n, "edges": self.n_edges, "outdeg_avg": outdeg, "cap_avg": cap_avg}

    def __repr__(self):
        return f"RoadNetwork(nodes={self.n_nodes}, edges={self.n_edges})"


@dataclass(frozen=True)
class Path:
    edges: tuple[int, ...]
    weight: float

    @classmethod
    def from_edges(cls, net: RoadNetwork, edges: Sequence[int]) -> "Path":
        edges = tuple(int(e) for e in edges)
        for a, b in zip(edges, edges[1:]):
            if net.edges[a].head != net.edges[b].tail:
                raise NetworkError(f"edges {a} and {b} are not consecutive")
        return cls(edges, path_weight(net, edges))

    def __len__(self):
        return len(self.edges)

    def key(self):
        return (self.weight, self.edges)


def path_weight(net: RoadNetwork, edges: Iterable[int]) -> float:
    return math.fsum(net.edges[e].weight for e in edges)


class FlowState:
    """Per-edge usage counts induced by a set of agent paths.

    Single-writer: callers that need independent copies use ``copy()``.
    """

    def __init__(self, net: RoadNetwork):
        self.network = net
        self.usage = [0] * net.n_edges
        self.paths: dict[int, tuple[int, ...]] = {}

    def add(self, agent: int, edges: Sequence[int]) -> None:
        if agent in self.paths:
            raise NetworkError(f"agent {agent} already has a path")
        edges = tuple(edges)
        for eid in edges:
            if not 0 <= eid < len(self.usage):
                raise NetworkError(f"flow references unknown edge {eid}")
        self.paths[agent] = edges
        for eid in edges:
            self.usage[eid] += 1

    def remove(self, agent: int) -> tuple[int, ...]:
        edges = self.paths.pop(agent)
        for eid in edges:
            self.usage[eid] -= 1
        return edges

    def copy(self) -> "FlowState":
        other = FlowState(self.network)
        other.usage = list(self.usage)
        other.paths = dict(self.paths)
        return other

    def usage_without(self, agent: int | None) -> list[int]:
        """The flow of every agent except ``agent`` (``f^{-i}``)."""
        usage = list(self.usage)
        if agent is not None:
            for eid in self.paths.get(agent, ()):
                usage[eid] -= 1
        return usage

    def is_feasible(self) -> bool:
        return all(u <= e.capacity for u, e in zip(self.usage, self.network.edges))

    def violations(self) -> list[int]:
        return [i for i, (u, e) in enumerate(zip(self.usage, self.network.edges)) if u > e.capacity]


@dataclass
class ResidualNetwork:
    network: RoadNetwork
    capacity: list = field(default_factory=list)

    def saturated(self) -> list[int]:
        return [eid for eid, c in enumerate(self.capacity) if c < 1]

    def consume(self, edges: Iterable[int]) -> None:
        for eid in edges:
            self.capacity[eid] -= 1

    def copy(self) -> "ResidualNetwork":
        return ResidualNetwork(self.network, list(self.capacity))


def residual(net, flow: FlowState | None = None, exclude: int | None = None) -> ResidualNetwork:
    """Capacities left over once ``flow`` (minus agent ``exclude``) is routed.

    Accepts a ``RoadNetwork`` or a ``TimeExpandedNetwork``.
    """
    net = getattr(net, "graph", net)
    if flow is None:
        return ResidualNetwork(net, [e.capacity for e in net.edges])
    if len(flow.usage) != net.n_edges:
        raise NetworkError("flow does not match the network's edge set")
    usage = flow.usage_without(exclude)
    return ResidualNetwork(net, [e.capacity - u for e, u in zip(net.edges, usage)])


def _reverse_distances(res, dest, origin, banned_edges, banned_nodes):
    net = res.network
    cap = res.capacity
    edges = net.edges
    dist = {dest: 0.0}
    done = set()
    heap = [(0.0, dest)]
    limit = math.inf
    while heap:
        d, v = heapq.heappop(heap)
        if v in done:
            continue
        if d > limit + WEIGHT_TOL:
            break
        done.add(v)
        if v == origin:
            limit = d
        for eid in net.in_edges[v]:
            if cap[eid] < 1 or eid in banned_edges:
                continue
            u = edges[eid].tail
            if u in done or u in banned_nodes:
                continue
            nd = d + edges[eid].weight
            if nd < dist.get(u, math.inf):
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return {v: dist[v] for v in done}


def _tight(dist, e):
    return abs(dist[e.tail] - e.weight - dist[e.head]) <= WEIGHT_TOL


def _completes(res, dist, start, dest, blocked, banned_edges):
    # tight-edge reachability from start to dest avoiding blocked nodes
    net = res.network
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == dest:
            return True
        for eid in net.out_edges[u]:
            e = net.edges[eid]
            v = e.head
            if v in seen or v in blocked or v not in dist:
                continue
            if res.capacity[eid] < 1 or eid in banned_edges or not _tight(dist, e):
                continue
            seen.add(v)
            queue.append(v)
    return False


def min_cost_path(
    res: ResidualNetwork,
    origin: int,
    dest: int,
    banned_edges=frozenset(),
    banned_nodes=frozenset(),
) -> Path | None:
    """Minimum-weight simple path using only edges with residual capacity >= 1.

    Among paths of equal weight (within ``WEIGHT_TOL``) the lexicographically
    smallest edge-id sequence wins.  Returns ``None`` if ``dest`` is
    unreachable.
    """
    if origin == dest:
        return Path((), 0.0)
    dist = _reverse_distances(res, dest, origin, banned_edges, banned_nodes)
    if origin not in dist:
        return None
    net = res.network
    chosen = []
    visited = {origin}
    u = origin
    while u != dest:
        step = None
        for eid in net.out_edges[u]:
            if res.capacity[eid] < 1 or eid in banned_edges:
                continue
            e = net.edges[eid]
            v = e.head
            if v in visited or v not in dist or not _tight(dist, e):
                continue
            if e.weight <= WEIGHT_TOL and net.has_zero_weight:
                if not _completes(res, dist, v, dest, visited, banned_edges):
                    continue
            step = eid
            break
        if step is None:  # pragma: no cover - tight completion always exists
            raise RuntimeError("shortest-path reconstruction failed")
        chosen.append(step)
        u = net.edges[step].head
        visited.add(u)
    return Path(tuple(chosen), path_weight(net, chosen))


def shortest_path(net: RoadNetwork, origin: int, dest: int) -> Path | None:
    """Unconstrained shortest path on the empty network."""
    return min_cost_path(residual(net), origin, dest)


def k_shortest_paths(res: ResidualNetwork, origin: int, dest: int):
    """Yield simple paths in nondecreasing weight (Yen's algorithm).

    Ties are emitted in lexicographic edge-id order.  The generator is lazy,
    so callers can stop as soon as paths become too expensive.
    """
    first = min_cost_path(res, origin, dest)
    if first is None:
        return
    found = [first]
    seen = {first.edges}
    candidates: list[tuple[float, tuple[int, ...]]] = []
    yield first
    if origin == dest:
        return
    net = res.network
    while True:
        last = found[-1]
        nodes = net.path_nodes(last.edges)
        for i in range(len(last.edges)):
            spur = nodes[i]
            root = last.edges[:i]
            banned_edges = {p.edges[i] for p in found if p.edges[:i] == root and len(p.edges) > i}
            banned_nodes = set(nodes[:i])
            spur_path = min_cost_path(res, spur, dest, banned_edges, banned_nodes)
            if spur_path is None:
                continue
            total = root + spur_path.edges
            if total in seen:
                continue
            seen.add(total)
            heapq.heappush(candidates, (path_weight(net, total), total))
        if not candidates:
            return
        w, edges = heapq.heappop(candidates)
        path = Path(edges, w)
        found.append(path)
        yield path


def all_simple_paths(net: RoadNetwork, origin: int, dest: int, capacity=None) -> list[Path]:
    """Every simple path from origin to dest by plain DFS (exhaustive oracle use)."""
    if origin == dest:
        return [Path((), 0.0)]
    out = []
    stack_edges: list[int] = []
    visited = {origin}

    def dfs(u):
        for eid in net.out_edges[u]:
            if capacity is not None and capacity[eid] < 1:
                continue
            v = net.edges[eid].head
            if v in visited:
                continue
            stack_edges.append(eid)
            if v == dest:
                out.append(Path(tuple(stack_edges), path_weight(net, stack_edges)))
            else:
                visited.add(v)
                dfs(v)
                visited.discard(v)
            stack_edges.pop()

    dfs(origin)
    return out


def _unit_max_flow(net: RoadNetwork, s: int, t: int, cap_limit: int) -> int:
    # Edmonds-Karp on unit capacities; stops once cap_limit paths are found.
    m = net.n_edges
    flow = [0] * m
    total = 0
    while total < cap_limit:
        parent: dict[int, tuple[int, int]] = {s: (-1, 0)}
        queue = deque([s])
        while queue and t not in parent:
            u = queue.popleft()
            for eid in net.out_edges[u]:
                v = net.edges[eid].head
                if flow[eid] == 0 and v not in parent:
                    parent[v] = (eid, 1)
                    queue.append(v)
            for eid in net.in_edges[u]:
                v = net.edges[eid].tail
                if flow[eid] == 1 and v not in parent:
                    parent[v] = (eid, -1)
                    queue.append(v)
        if t not in parent:
            break
        v = t
        while v != s:
            eid, direction = parent[v]
            flow[eid] += direction
            v = net.edges[eid].tail if direction == 1 else net.edges[eid].head
        total += 1
    return total


def edge_disjoint_paths(net: RoadNetwork, s: int, t: int, limit: int | None = None) -> int:
    """Maximum number of edge-disjoint s->t paths (unit-capacity max-flow)."""
    return _unit_max_flow(net, s, t, net.n_edges if limit is None else limit)


def is_k_edge_connected(net: RoadNetwork, k: int) -> bool:
    """True iff every ordered node pair has at least ``k`` edge-disjoint paths.

    Uses the fixed-root reduction: the minimum over all pairs equals the
    minimum of ``λ(r, v)`` and ``λ(v, r)`` over every ``v``.
    """
    if net.n_nodes == 0:
        raise NetworkError("empty network")
    if k <= 0 or net.n_nodes == 1:
        return True
    root = 0
    for v in range(1, net.n_nodes):
        if _unit_max_flow(net, root, v, k) < k or _unit_max_flow(net, v, root, k) < k:
            return False
    return True


def is_strongly_connected(net: RoadNetwork) -> bool:
    if net.n_nodes <= 1:
        return True

    def reach(adj, side):
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for eid in adj[u]:
                v = getattr(net.edges[eid], side)
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen)

    return reach(net.out_edges, "head") == net.n_nodes and reach(net.in_edges, "tail") == net.n_nodes


def hop_diameter(net: RoadNetwork) -> int:
    """Largest finite BFS hop distance over all ordered pairs."""
    best = 0
    for s in range(net.n_nodes):
        depth = {s: 0}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for eid in net.out_edges[u]:
                v = net.edges[eid].head
                if v not in depth:
                    depth[v] = depth[u] + 1
                    queue.append(v)
        best = max(best, max(depth.values()))
    return best
