"""Generators for the canonical adversarial instances and random populations."""
from __future__ import annotations

import itertools
import math
import random
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import NetworkError
from .instance import AgentProfile, Instance
from .network import Edge, RoadNetwork


def fig1_k(epsilon: float) -> float:
    return min(2, (10 - 4 * epsilon) / epsilon)


def gen_fig1(K: float | None = None, epsilon: float = 0.01) -> Instance:
    """Two agents at A heading to D and G, competing for the unit edge A-F.

    Every road is two-way.  (B,C) has length K and (F,E) length K-1; all
    other roads have length 1.  (A,F) has capacity 1, the rest capacity 2.
    """
    if K is None:
        K = fig1_k(epsilon)
    if K < 1:
        raise NetworkError("K must be >= 1")
    names = list("ABCDEFG")
    roads = [
        ("A", "B", 2, 1),
        ("A", "F", 1, 1),
        ("B", "C", 2, K),
        ("C", "D", 2, 1),
        ("C", "E", 2, 1),
        ("E", "D", 2, 1),
        ("E", "G", 2, 1),
        ("F", "E", 2, K - 1),
    ]
    net = RoadNetwork.from_named_edges(names, roads, symmetric=True)
    agents = [
        AgentProfile("1", net.index("A"), net.index("D")),
        AgentProfile("2", net.index("A"), net.index("G")),
    ]
    return Instance(net, agents, {"generator": "fig1", "K": _num(K)})


def gen_sd_tight(n: int, epsilon: float = 0.01) -> Instance:
    """Chain v1..vn -> D on which SD's natural ordering pays 2^n - 1.

    Agent i sits at v_i.  Its direct edge to D costs eps (1+eps for agent
    1); its detour v_i -> v_{i+1} -> D costs exactly 2^(i-1), the second leg
    being agent i+1's direct edge.  v_n has a second, parallel edge to D of
    cost 2^(n-1).  All capacities are 1.
    """
    if n < 2:
        raise NetworkError("n must be >= 2")
    if not 0 < epsilon < 1:
        raise NetworkError("epsilon must be in (0, 1)")
    names = [f"v{i}" for i in range(1, n + 1)] + ["D"]
    d = n
    edges = []
    for i in range(1, n):
        edges.append(Edge(i - 1, d, 1, 1 + epsilon if i == 1 else epsilon))
        edges.append(Edge(i - 1, i, 1, 2 ** (i - 1) - epsilon))
    edges.append(Edge(n - 1, d, 1, epsilon))
    edges.append(Edge(n - 1, d, 1, float(2 ** (n - 1))))
    net = RoadNetwork(names, edges)
    agents = [AgentProfile(str(i + 1), i, d) for i in range(n)]
    return Instance(net, agents, {"generator": "sd-tight", "n": str(n), "epsilon": _num(epsilon)})


@dataclass(frozen=True)
class ChainInstanceParams:
    k: int
    level_sizes: tuple[int, ...]

    @classmethod
    def for_levels(cls, k: int) -> "ChainInstanceParams":
        if k < 2:
            raise NetworkError("k must be >= 2")
        sizes = [1] + [2 * 3 ** (i - 2) for i in range(2, k + 1)]
        return cls(k, tuple(sizes))

    @property
    def cumulative(self) -> tuple[int, ...]:
        return tuple(itertools.accumulate(self.level_sizes))

    @property
    def n_agents(self) -> int:
        return sum(self.level_sizes)


def gen_chain(k: int, epsilon: float = 0.01) -> Instance:
    """Levels v1..vk with 1, 2, 6, 18, ... agents each, sharing destination D.

    Level sizes double the number of agents on all lower levels, so an
    agent of level i is last among levels <= i with probability 2/3.  Edge
    weights follow the SD-tight pattern; both edges leaving v_i carry
    capacity equal to the level size, and v_k's expensive parallel edge to D
    can hold every agent.
    """
    params = ChainInstanceParams.for_levels(k)
    sizes = params.level_sizes
    n = params.n_agents
    names = [f"v{i}" for i in range(1, k + 1)] + ["D"]
    d = k
    edges = []
    for i in range(1, k):
        c = sizes[i - 1]
        edges.append(Edge(i - 1, d, c, 1 + epsilon if i == 1 else epsilon))
        edges.append(Edge(i - 1, i, c, 2 ** (i - 1) - epsilon))
    edges.append(Edge(k - 1, d, sizes[-1], epsilon))
    edges.append(Edge(k - 1, d, n, float(2 ** (k - 1))))
    net = RoadNetwork(names, edges)
    agents = []
    for level, size in enumerate(sizes):
        for _ in range(size):
            agents.append(AgentProfile(str(len(agents) + 1), level, d))
    meta = {"generator": "chain", "k": str(k), "epsilon": _num(epsilon)}
    return Instance(net, agents, meta)


def agent_levels(instance: Instance) -> list[int]:
    """Level (1-based) of every agent in a chain instance: its origin index + 1."""
    return [a.origin + 1 for a in instance.agents]


def has_chain_of_levels(ordering: Sequence[int], levels: Sequence[int]) -> bool:
    """At every level >= 2 some agent comes after all agents of lower levels."""
    last: dict[int, int] = {}
    for pos, agent in enumerate(ordering):
        last[levels[agent]] = pos
    top = max(levels)
    for lvl in range(2, top + 1):
        if last[lvl] < max(last[l] for l in range(1, lvl)):
            return False
    return True


def chain_probability(k: int) -> Fraction:
    """Exact probability that a uniform ordering has the chain-of-levels property.

    Enumerates every distinct sequence of level labels; each stands for the
    same number of agent permutations, so counting sequences suffices.
    """
    sizes = ChainInstanceParams.for_levels(k).level_sizes
    labels = [lvl + 1 for lvl, s in enumerate(sizes) for _ in range(s)]
    hits = total = 0
    for seq in _distinct_permutations(labels):
        total += 1
        hits += has_chain_of_levels(range(len(seq)), seq)
    return Fraction(hits, total)


def _distinct_permutations(items):
    items = sorted(items)
    # next-permutation walk over the sorted multiset
    n = len(items)
    while True:
        yield tuple(items)
        i = n - 2
        while i >= 0 and items[i] >= items[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while items[j] <= items[i]:
            j -= 1
        items[i], items[j] = items[j], items[i]
        items[i + 1:] = reversed(items[i + 1:])


@dataclass(frozen=True)
class PreferenceProfile:
    """Weak orders over m objects as rank vectors (rank 1 = most preferred)."""

    m: int
    ranks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for r in self.ranks:
            if len(r) != self.m:
                raise NetworkError("rank vector length differs from object count")
            if sorted(set(r)) != list(range(1, max(r) + 1)):
                raise NetworkError(f"ranks {r} are not contiguous from 1")

    @classmethod
    def from_orders(cls, m: int, orders: Sequence[Sequence[int]]) -> "PreferenceProfile":
        """Strict orders given as object lists, best first (0-based object ids)."""
        ranks = []
        for order in orders:
            r = [0] * m
            for pos, obj in enumerate(order, 1):
                r[obj] = pos
            ranks.append(tuple(r))
        return cls(m, tuple(ranks))


def strict_rank_vectors(m: int) -> list[tuple[int, ...]]:
    """Rank vectors of all m! strict orders, in lexicographic order of the preference lists."""
    return PreferenceProfile.from_orders(m, list(itertools.permutations(range(m)))).ranks


def gen_tap_plus(profile: PreferenceProfile, epsilon: float = 0.01, all_strict: bool = False) -> Instance:
    """Object-assignment profile encoded as a single-origin routing instance.

    Object j becomes node v_j behind a unit edge (O, v_j) of weight eps; each
    preference order becomes a destination node reached from v_j at a cost
    equal to the rank of object j.  Destination nodes are built for the
    orders in the profile only, or for every strict order with
    ``all_strict``.
    """
    m = profile.m
    orders = list(strict_rank_vectors(m)) if all_strict else []
    for r in profile.ranks:
        if r not in orders:
            orders.append(r)
    names = ["O"] + [f"v{j + 1}" for j in range(m)] + [f"D{k + 1}" for k in range(len(orders))]
    edges = [Edge(0, 1 + j, 1, epsilon) for j in range(m)]
    for k, r in enumerate(orders):
        for j in range(m):
            edges.append(Edge(1 + j, 1 + m + k, 1, r[j]))
    net = RoadNetwork(names, edges)
    agents = [AgentProfile(str(i + 1), 0, 1 + m + orders.index(r)) for i, r in enumerate(profile.ranks)]
    return Instance(net, agents, {"generator": "tap-plus", "objects": str(m), "epsilon": _num(epsilon)})


def object_of(instance: Instance, path_edges: Sequence[int]) -> int | None:
    """Object index encoded by the first edge of a path in a TAP+ instance."""
    if not path_edges:
        return None
    return instance.network.edges[path_edges[0]].head - 1


def aio_serial_dictatorship(profile: PreferenceProfile, ordering: Sequence[int]) -> dict[int, int | None]:
    """Reference SD for object assignment: each agent takes its best remaining object.

    Ties between equally ranked objects go to the lower object index.
    """
    free = set(range(profile.m))
    out: dict[int, int | None] = {}
    for agent in ordering:
        if not free:
            out[agent] = None
            continue
        r = profile.ranks[agent]
        obj = min(free, key=lambda j: (r[j], j))
        free.discard(obj)
        out[agent] = obj
    return out


def gen_yao_distribution(epsilon: float = 0.01) -> list[tuple[Fraction, Instance]]:
    """The two-agent gadget (K=2) w.p. 2/3, and the same network with agent 1 heading to F w.p. 1/3."""
    base = gen_fig1(K=2, epsilon=epsilon)
    f = base.network.index("F")
    agents = list(base.agents)
    agents[0] = AgentProfile(agents[0].name, agents[0].origin, f)
    shifted = Instance(base.network, agents, dict(base.meta, variant="misreport-F"))
    return [(Fraction(2, 3), base), (Fraction(1, 3), shifted)]


def random_population(net: RoadNetwork, count: int | None = None, seed=0) -> list[AgentProfile]:
    """Origins and destinations drawn independently and uniformly, with replacement.

    ``count`` defaults to a third of the node count.
    """
    if count is None:
        count = max(1, net.n_nodes // 3)
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = random.Random(seed)
    n = net.n_nodes
    out = []
    for i in range(count):
        o = rng.randrange(n)
        d = rng.randrange(n)
        out.append(AgentProfile(str(i + 1), o, d))
    return out


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5 + 1e-9)


def augment(net: RoadNetwork, gamma: float) -> RoadNetwork:
    """Give every outgoing edge of v the capacity round(gamma * mean out-capacity of v)."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    caps = [e.capacity for e in net.edges]
    for v, out in enumerate(net.out_edges):
        finite = [eid for eid in out if math.isfinite(net.edges[eid].capacity)]
        if not finite:
            continue
        avg = math.fsum(net.edges[eid].capacity for eid in finite) / len(finite)
        new = _round_half_up(gamma * avg)
        if new < 1:
            warnings.warn(f"node {net.names[v]}: augmented capacity {new} clamped to 1")
            new = 1
        for eid in finite:
            caps[eid] = new
    return net.with_capacities(caps)


def _num(x) -> str:
    from .instance import fmt_number

    return fmt_number(float(x))
