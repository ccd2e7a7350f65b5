"""Allocation mechanisms (SD, BSD, RSD), the exact optimum and cost accounting."""
from __future__ import annotations

import math
import random
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import InfeasibleError, NetworkError, NotCertifiedError, TooLargeError
from .instance import Instance
from .network import (
    WEIGHT_TOL,
    FlowState,
    Path,
    ResidualNetwork,
    k_shortest_paths,
    min_cost_path,
    residual,
    shortest_path,
)

EXACT_ORDERING_LIMIT = 40320  # 8!
DEFAULT_PATH_CAP = 64
DEFAULT_BUDGET = 200_000


@dataclass
class Stage:
    agent: int
    path: Path
    residual_after: list


@dataclass
class Allocation:
    """Joint assignment of one path per agent plus the flow it induces."""

    paths: dict[int, Path]
    flow: FlowState
    ordering: list[int] | None = None
    trace: list[Stage] | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def from_paths(cls, net, paths: dict[int, Path], **kw) -> "Allocation":
        flow = FlowState(net)
        for agent in sorted(paths):
            flow.add(agent, paths[agent].edges)
        return cls(dict(paths), flow, **kw)

    @property
    def network(self):
        return self.flow.network

    def is_feasible(self) -> bool:
        return self.flow.is_feasible()

    def assigned_weight(self) -> float:
        return math.fsum(p.weight for p in self.paths.values())

    def key(self):
        return tuple(self.paths[i].edges for i in sorted(self.paths))


Mechanism = Callable[[Instance], Allocation]


# --- costs -----------------------------------------------------------------

def reaction(instance: Instance, allocation: Allocation, agent: int, destination: int | None = None):
    """Cheapest path to the agent's true destination given everyone else's flow."""
    a = instance.agents[agent]
    dest = a.destination if destination is None else destination
    res = residual(allocation.network, allocation.flow, exclude=agent)
    return min_cost_path(res, a.origin, dest)


def agent_cost(instance: Instance, allocation: Allocation, agent: int) -> float:
    path = reaction(instance, allocation, agent)
    return math.inf if path is None else path.weight


def social_cost(allocation: Allocation, instance: Instance, strict: bool = False) -> float:
    """Sum of best-reaction costs toward true destinations.

    ``strict=True`` additionally asserts every assigned path is itself a best
    reaction, which holds for SD outputs.
    """
    costs = []
    for i in range(instance.n_agents):
        c = agent_cost(instance, allocation, i)
        if strict and abs(c - allocation.paths[i].weight) > WEIGHT_TOL:
            raise AssertionError(f"agent {i}: assigned {allocation.paths[i].weight} but best reaction {c}")
        costs.append(c)
    return math.fsum(costs)


def opt_lower_bound(instance: Instance) -> float:
    """Sum of unconstrained shortest-path weights; never above the optimum."""
    total = []
    for a in instance.agents:
        p = shortest_path(instance.network, a.origin, a.declared)
        if p is None:
            raise InfeasibleError(f"agent {a.name}: destination unreachable", agent=a.name)
        total.append(p.weight)
    return math.fsum(total)


# --- serial dictatorship family --------------------------------------------

def _check_ordering(ordering: Sequence[int], n: int) -> list[int]:
    ordering = list(ordering)
    if sorted(ordering) != list(range(n)):
        raise NetworkError(f"ordering {ordering} is not a permutation of {n} agents")
    return ordering


def serial_dictatorship(instance: Instance, ordering: Sequence[int] | None = None, record_trace: bool = False) -> Allocation:
    """Agents pick, in order, a min-cost path on what their predecessors left."""
    n = instance.n_agents
    ordering = _check_ordering(range(n) if ordering is None else ordering, n)
    net = instance.network
    res = residual(net)
    flow = FlowState(net)
    paths: dict[int, Path] = {}
    trace = [] if record_trace else None
    for stage, i in enumerate(ordering, 1):
        a = instance.agents[i]
        path = min_cost_path(res, a.origin, a.declared)
        if path is None:
            raise InfeasibleError(
                f"stage {stage}: agent {a.name} has no feasible path to {net.names[a.declared]}",
                stage=stage,
                agent=a.name,
            )
        res.consume(path.edges)
        flow.add(i, path.edges)
        paths[i] = path
        if trace is not None:
            trace.append(Stage(i, path, list(res.capacity)))
    return Allocation(paths, flow, ordering=ordering, trace=trace)


@dataclass(frozen=True)
class Bipartition:
    """Split of the edge set into X1 and its complement X2."""

    x1: frozenset
    n_edges: int

    @classmethod
    def from_x1(cls, x1: Iterable[int], n_edges: int) -> "Bipartition":
        x1 = frozenset(x1)
        if any(not 0 <= e < n_edges for e in x1):
            raise NetworkError("bipartition references unknown edge")
        return cls(x1, n_edges)

    @property
    def x2(self) -> frozenset:
        return frozenset(range(self.n_edges)) - self.x1

    def in_x2(self, eid: int) -> bool:
        return eid not in self.x1


def bsd_swaps(instance: Instance, ordering: Sequence[int], bipartition: Bipartition, mode: str = "edge") -> bool:
    """Whether BSD runs the second pole first.

    ``mode="edge"`` (default): the poles' lexicographic-minimum paths on the
    empty network start with the same edge and that edge is in X2.  On
    single-origin object-assignment instances the first edge is the object,
    so this is the classical bipolar rule.
    ``mode="path"``: the two minimum paths are identical and lie entirely in
    X2.  This variant is manipulable: a pole can copy the other's
    destination to force the swap.
    """
    first, second = ordering[0], ordering[1]
    net = instance.network
    p1 = shortest_path(net, instance.agents[first].origin, instance.agents[first].declared)
    p2 = shortest_path(net, instance.agents[second].origin, instance.agents[second].declared)
    if p1 is None or p2 is None:
        return False
    if mode == "path":
        return p1.edges == p2.edges and all(bipartition.in_x2(e) for e in p1.edges)
    if mode == "edge":
        return bool(p1.edges) and bool(p2.edges) and p1.edges[0] == p2.edges[0] and bipartition.in_x2(p1.edges[0])
    raise ValueError(f"unknown BSD mode {mode!r}")


def bipolar_serial_dictatorship(
    instance: Instance,
    ordering: Sequence[int],
    bipartition: Bipartition,
    mode: str = "edge",
    record_trace: bool = False,
) -> Allocation:
    ordering = _check_ordering(ordering, instance.n_agents)
    if len(ordering) < 2:
        return serial_dictatorship(instance, ordering, record_trace)
    swapped = bsd_swaps(instance, ordering, bipartition, mode)
    run = [ordering[1], ordering[0], *ordering[2:]] if swapped else ordering
    alloc = serial_dictatorship(instance, run, record_trace)
    alloc.info["bsd_swapped"] = swapped
    return alloc


def random_ordering(n: int, seed) -> list[int]:
    order = list(range(n))
    random.Random(seed).shuffle(order)
    return order


def random_serial_dictatorship(instance: Instance, seed=None) -> Allocation:
    alloc = serial_dictatorship(instance, random_ordering(instance.n_agents, seed))
    alloc.info["seed"] = seed
    return alloc


def _multiset_sequences(counts: dict):
    keys = sorted(counts)
    n = sum(counts.values())
    seq = []

    def rec():
        if len(seq) == n:
            yield tuple(seq)
            return
        for k in keys:
            if counts[k]:
                counts[k] -= 1
                seq.append(k)
                yield from rec()
                seq.pop()
                counts[k] += 1

    yield from rec()


def count_distinct_orderings(types: Sequence) -> int:
    total = math.factorial(len(types))
    for c in Counter(types).values():
        total //= math.factorial(c)
    return total


def distinct_orderings(instance: Instance, limit: int = EXACT_ORDERING_LIMIT):
    """Orderings that differ in outcome, each standing for equally many permutations.

    Agents with the same origin and declared and true destination are
    interchangeable for SD, so only the sequence of their types matters.
    Every yielded ordering represents ``prod(count_t!)`` permutations.
    """
    types = [(a.origin, a.declared, a.destination) for a in instance.agents]
    total = count_distinct_orderings(types)
    if total > limit:
        raise TooLargeError(
            f"{total} distinct orderings exceed the exact-mode limit {limit}; use monte-carlo mode"
        )
    members: dict = {}
    for i, t in enumerate(types):
        members.setdefault(t, []).append(i)
    for seq in _multiset_sequences(Counter(types)):
        cursor = {t: 0 for t in members}
        order = []
        for t in seq:
            order.append(members[t][cursor[t]])
            cursor[t] += 1
        yield order


@dataclass(frozen=True)
class RSDEstimate:
    mean: float
    stderr: float
    samples: int
    exact: bool


def rsd_expected_cost(instance: Instance, mode: str = "exact", trials: int = 100, seed=0) -> RSDEstimate:
    """Expected SD social cost under a uniformly random ordering.

    ``exact`` averages over every outcome-distinct ordering; ``mc`` samples
    ``trials`` orderings from ``seed``.
    """
    truthful = instance

    def sc(order):
        return social_cost(serial_dictatorship(truthful, order), truthful)

    if mode == "exact":
        costs = [sc(order) for order in distinct_orderings(instance)]
        return RSDEstimate(math.fsum(costs) / len(costs), 0.0, len(costs), True)
    if mode in ("mc", "monte-carlo"):
        if trials < 1:
            raise ValueError("trials must be >= 1")
        rng = random.Random(seed)
        costs = []
        for _ in range(trials):
            order = list(range(instance.n_agents))
            rng.shuffle(order)
            costs.append(sc(order))
        mean = math.fsum(costs) / trials
        stderr = statistics.stdev(costs) / math.sqrt(trials) if trials > 1 else 0.0
        return RSDEstimate(mean, stderr, trials, False)
    raise ValueError(f"unknown RSD mode {mode!r}")


# --- exact optimum -----------------------------------------------------------

class _BudgetExhausted(Exception):
    pass


def optimal_allocation(
    instance: Instance,
    budget: int = DEFAULT_BUDGET,
    path_cap: int = DEFAULT_PATH_CAP,
) -> Allocation:
    """Minimum total-weight feasible joint assignment by branch and bound.

    Agents are fixed in decreasing order of unconstrained shortest-path
    weight; each agent branches over its simple paths in the current residual
    network in nondecreasing weight.  A branch is cut once partial weight
    plus the unconstrained weights of the unassigned agents exceeds the
    incumbent.  Among equal-cost optima the lexicographically smallest tuple
    of per-agent edge sequences is returned.

    ``info["certified"]`` is False when the node budget ran out or the
    per-agent path cap cut a branch that could still improve the incumbent.
    """
    n = instance.n_agents
    net = instance.network
    agents = instance.agents
    lb = []
    for a in agents:
        p = shortest_path(net, a.origin, a.declared)
        if p is None:
            raise InfeasibleError(f"agent {a.name}: destination unreachable", agent=a.name)
        lb.append(p.weight)
    order = sorted(range(n), key=lambda i: (-lb[i], i))
    rest = [0.0] * (n + 1)
    for pos in range(n - 1, -1, -1):
        rest[pos] = rest[pos + 1] + lb[order[pos]]

    res = residual(net)
    chosen: dict[int, Path] = {}
    state = {"best": math.inf, "key": None, "paths": None, "expanded": 0, "capped": False}

    def rec(pos: int, partial: float):
        if pos == n:
            key = tuple(chosen[i].edges for i in range(n))
            if partial < state["best"] - WEIGHT_TOL or (
                partial <= state["best"] + WEIGHT_TOL and key < state["key"]
            ):
                state.update(best=partial, key=key, paths=dict(chosen))
            return
        state["expanded"] += 1
        if state["expanded"] > budget:
            raise _BudgetExhausted
        i = order[pos]
        a = agents[i]
        seen = 0
        for path in k_shortest_paths(res, a.origin, a.declared):
            if partial + path.weight + rest[pos + 1] > state["best"] + WEIGHT_TOL:
                break
            seen += 1
            if seen > path_cap:
                state["capped"] = True
                break
            res.consume(path.edges)
            chosen[i] = path
            rec(pos + 1, partial + path.weight)
            del chosen[i]
            for e in path.edges:
                res.capacity[e] += 1

    exhausted = False
    try:
        rec(0, 0.0)
    except _BudgetExhausted:
        exhausted = True
    certified = not exhausted and not state["capped"]
    if state["paths"] is None:
        if certified:
            raise InfeasibleError("no feasible joint assignment exists")
        raise NotCertifiedError("search stopped before finding any feasible assignment")
    alloc = Allocation.from_paths(net, state["paths"])
    alloc.info.update(certified=certified, expanded=state["expanded"], budget_exhausted=exhausted)
    return alloc


def optimal_mechanism(**kw) -> Mechanism:
    def run(instance: Instance) -> Allocation:
        return optimal_allocation(instance, **kw)

    return run


def sd_mechanism(ordering: Sequence[int] | None = None) -> Mechanism:
    def run(instance: Instance) -> Allocation:
        return serial_dictatorship(instance, ordering)

    return run


def bsd_mechanism(ordering: Sequence[int], bipartition: Bipartition, mode: str = "edge") -> Mechanism:
    def run(instance: Instance) -> Allocation:
        return bipolar_serial_dictatorship(instance, ordering, bipartition, mode)

    return run


# --- approximation reports ---------------------------------------------------

@dataclass(frozen=True)
class ApproxReport:
    mechanism_cost: float
    reference_cost: float
    reference_kind: str  # "exact" or "proxy"

    @property
    def ratio(self) -> float:
        if self.reference_cost == 0:
            return 1.0 if self.mechanism_cost == 0 else math.inf
        return self.mechanism_cost / self.reference_cost


def approx_report(instance: Instance, allocation: Allocation, reference: str = "exact", **kw) -> ApproxReport:
    cost = social_cost(allocation, instance)
    if reference == "exact":
        ref = optimal_allocation(instance, **kw)
        if not ref.info.get("certified", True):
            raise NotCertifiedError("optimal reference is not certified")
        return ApproxReport(cost, social_cost(ref, instance), "exact")
    if reference == "proxy":
        return ApproxReport(cost, opt_lower_bound(instance), "proxy")
    raise ValueError(f"unknown reference kind {reference!r}")


# --- allocation text format ----------------------------------------------------

def dump_allocation(allocation: Allocation, instance: Instance) -> str:
    """``assign <agent> <edge ids|-> <cost>`` per agent, then ``sc <total>``."""
    from .instance import fmt_number

    lines = []
    costs = []
    for i, a in enumerate(instance.agents):
        path = allocation.paths[i]
        cost = agent_cost(instance, allocation, i)
        costs.append(cost)
        edges = ",".join(str(e) for e in path.edges) or "-"
        lines.append(f"assign {a.name} {edges} {fmt_number(float(cost))}")
    lines.append(f"sc {fmt_number(float(math.fsum(costs)))}")
    return "\n".join(lines) + "\n"


def parse_allocation(text: str, instance: Instance) -> Allocation:
    net = instance.network
    paths: dict[int, Path] = {}
    for no, ln in enumerate(text.splitlines(), 1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split()
        if parts[0] == "assign":
            if len(parts) != 4:
                raise NetworkError(f"line {no}: expected 'assign <agent> <edges> <cost>'")
            i = instance.agent_index(parts[1])
            edges = [] if parts[2] == "-" else [int(x) for x in parts[2].split(",")]
            if any(not 0 <= e < net.n_edges for e in edges):
                raise NetworkError(f"line {no}: unknown edge id")
            paths[i] = Path.from_edges(net, edges)
        elif parts[0] != "sc":
            raise NetworkError(f"line {no}: unknown directive {parts[0]!r}")
    missing = set(range(instance.n_agents)) - set(paths)
    if missing:
        raise NetworkError(f"allocation lacks agents {sorted(missing)}")
    return Allocation.from_paths(net, paths)
