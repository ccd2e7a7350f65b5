"""Empirical checks of strategyproofness, Pareto optimality, non-bossiness and DoCP."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InfeasibleError, NotCertifiedError, TapError
from .instance import Instance, fmt_number
from .mechanisms import (
    DEFAULT_PATH_CAP,
    Allocation,
    Mechanism,
    agent_cost,
    distinct_orderings,
    optimal_allocation,
    reaction,
    serial_dictatorship,
)
from .network import WEIGHT_TOL, Path, k_shortest_paths, residual

log = logging.getLogger(__name__)

GAIN_TOL = 1e-9


def best_reaction(instance: Instance, allocation: Allocation, agent: int) -> tuple[Path, float]:
    path = reaction(instance, allocation, agent)
    if path is None:
        raise InfeasibleError(f"agent {instance.agents[agent].name} has an empty reaction set",
                              agent=instance.agents[agent].name)
    return path, path.weight


def check_best_reactions(instance: Instance, allocation: Allocation) -> list[bool]:
    """Per agent: is the assigned path as cheap as the best available reaction?"""
    out = []
    for i in range(instance.n_agents):
        _, cost = best_reaction(instance, allocation, i)
        out.append(abs(allocation.paths[i].weight - cost) <= WEIGHT_TOL)
    return out


@dataclass
class ParetoVerdict:
    pareto: bool
    certified: bool
    dominating: dict[int, Path] | None = None

    def __bool__(self):
        return self.pareto


def check_pareto_exhaustive(
    instance: Instance,
    allocation: Allocation,
    budget: int = 200_000,
    path_cap: int = DEFAULT_PATH_CAP,
) -> ParetoVerdict:
    """Search for a feasible assignment that weakly improves everyone and strictly someone.

    An alternative is compared by the weight of each agent's new path against
    her current cost.  Each agent only branches over paths no heavier than
    her current cost, enumerated cheapest first in the residual network.
    """
    n = instance.n_agents
    net = instance.network
    limits = [agent_cost(instance, allocation, i) for i in range(n)]
    res = residual(net)
    chosen: dict[int, Path] = {}
    state = {"expanded": 0, "capped": False, "found": None}

    class _Stop(Exception):
        pass

    def rec(i: int, strict: bool):
        if i == n:
            if strict:
                state["found"] = dict(chosen)
                raise _Stop
            return
        state["expanded"] += 1
        if state["expanded"] > budget:
            raise _Stop
        a = instance.agents[i]
        seen = 0
        for path in k_shortest_paths(res, a.origin, a.destination):
            if path.weight > limits[i] + WEIGHT_TOL:
                break
            seen += 1
            if seen > path_cap:
                state["capped"] = True
                break
            res.consume(path.edges)
            chosen[i] = path
            rec(i + 1, strict or path.weight < limits[i] - WEIGHT_TOL)
            del chosen[i]
            for e in path.edges:
                res.capacity[e] += 1

    try:
        rec(0, False)
    except _Stop:
        pass
    if state["found"] is not None:
        return ParetoVerdict(False, True, state["found"])
    certified = state["expanded"] <= budget and not state["capped"]
    return ParetoVerdict(True, certified)


@dataclass(frozen=True)
class ManipulationReport:
    agent: int
    report: int
    truthful_cost: float
    manipulated_cost: float

    @property
    def gain(self) -> float:
        return self.truthful_cost - self.manipulated_cost


def _cost_under_report(instance, mechanism, agent, report):
    alloc = mechanism(instance.with_declared(agent, report))
    return agent_cost(instance, alloc, agent)


def find_manipulations(
    instance: Instance,
    mechanism: Mechanism,
    agent: int,
    candidates: Iterable[int] | None = None,
    tol: float = GAIN_TOL,
) -> list[ManipulationReport]:
    """Every misreport that lowers the agent's cost toward her true destination.

    Reports under which the mechanism fails are skipped and logged.
    """
    a = instance.agents[agent]
    truthful = instance.with_declared(agent, a.destination)
    base_cost = agent_cost(truthful, mechanism(truthful), agent)
    if candidates is None:
        candidates = range(instance.network.n_nodes)
    found = []
    for r in candidates:
        if r == a.destination:
            continue
        try:
            cost = _cost_under_report(truthful, mechanism, agent, r)
        except TapError as exc:
            log.info("agent %s report %s skipped: %s", a.name, instance.node_name(r), exc)
            continue
        if base_cost - cost > tol:
            found.append(ManipulationReport(agent, r, base_cost, cost))
    return found


def find_manipulation(instance, mechanism, agent, candidates=None, tol=GAIN_TOL) -> ManipulationReport | None:
    """The largest strict gain, ties going to the earliest candidate; None if SP holds."""
    best = None
    for rep in find_manipulations(instance, mechanism, agent, candidates, tol):
        if best is None or rep.gain > best.gain + tol:
            best = rep
    return best


def check_non_bossy(
    instance: Instance,
    mechanism: Mechanism,
    agent: int,
    reports: Iterable[int] | None = None,
) -> bool:
    """No report that keeps the agent's own path may change anyone else's."""
    base = mechanism(instance)
    own = base.paths[agent].edges
    if reports is None:
        reports = range(instance.network.n_nodes)
    for r in reports:
        try:
            alt = mechanism(instance.with_declared(agent, r))
        except TapError:
            continue
        if alt.paths[agent].edges != own:
            continue
        if any(alt.paths[j].edges != base.paths[j].edges for j in base.paths if j != agent):
            return False
    return True


def manipulation_rows(instance: Instance, reports: Sequence[ManipulationReport]) -> list[dict]:
    return [
        {
            "agent": instance.agents[r.agent].name,
            "report": instance.node_name(r.report),
            "truthful_cost": fmt_number(float(r.truthful_cost)),
            "manipulated_cost": fmt_number(float(r.manipulated_cost)),
            "gain": fmt_number(float(r.gain)),
        }
        for r in reports
    ]


def format_manipulations(instance: Instance, reports: Sequence[ManipulationReport], fmt: str = "text") -> str:
    rows = manipulation_rows(instance, reports)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, ["agent", "report", "truthful_cost", "manipulated_cost", "gain"], lineterminator="\n"
        )
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    return "".join(
        f"manipulation agent={r['agent']} report={r['report']} truthful={r['truthful_cost']} "
        f"manipulated={r['manipulated_cost']} gain={r['gain']}\n"
        for r in rows
    )


# --- DoCP -------------------------------------------------------------------

@dataclass(frozen=True)
class DoCPWitness:
    blocked: int
    blocking: int
    alpha: int
    beta: int
    waypoints: tuple[int, ...]
    gamma: tuple[int, ...] | None  # None when a reverse edge is missing
    residual: float
    required: int

    @property
    def ok(self) -> bool:
        return self.gamma is not None and self.residual >= self.required


@dataclass
class DoCPReport:
    ok: bool
    witnesses: list[DoCPWitness]
    certified: bool = True

    def __bool__(self):
        return self.ok


def _reverse(net, edges):
    out = []
    for eid in reversed(edges):
        e = net.edges[eid]
        back = net.find_edges(e.head, e.tail)
        if not back:
            return None
        out.append(back[0])
    return out


def _split_at(net, edges, node, origin):
    """Edges of a path before and after its first visit of ``node``."""
    nodes = net.path_nodes(edges, origin)
    k = nodes.index(node)
    return list(edges[:k]), list(edges[k:])


def alternative_path(instance, sd: Allocation, opt: Allocation, blocked: int, blocking: int):
    """Detour of a blocked agent through the blocking agent's route.

    Follows the blocked agent's optimal path to the first shared node alpha,
    runs the blocker's SD path backwards to her origin, takes the blocker's
    optimal path to her destination, runs the SD path backwards again to the
    last shared node beta and finishes on the blocked agent's optimal path.
    Returns ``(alpha, beta, edges or None)``.
    """
    net = instance.network
    ai, aj = instance.agents[blocked], instance.agents[blocking]
    star_i = list(opt.paths[blocked].edges)
    sd_j = list(sd.paths[blocking].edges)
    nodes_star = net.path_nodes(star_i, ai.origin)
    on_j = set(net.path_nodes(sd_j, aj.origin))
    common = [v for v in nodes_star if v in on_j]
    alpha, beta = common[0], common[-1]
    head_i, _ = _split_at(net, star_i, alpha, ai.origin)
    _, tail_i = _split_at(net, star_i, beta, ai.origin)
    to_alpha, _ = _split_at(net, sd_j, alpha, aj.origin)
    _, from_beta = _split_at(net, sd_j, beta, aj.origin)
    back1 = _reverse(net, to_alpha)
    back2 = _reverse(net, from_beta)
    if back1 is None or back2 is None:
        return alpha, beta, None
    gamma = head_i + back1 + list(opt.paths[blocking].edges) + back2 + tail_i
    return alpha, beta, tuple(gamma)


def check_docp(instance: Instance, sd: Allocation, optimal: Allocation | None = None) -> DoCPReport:
    """Verify the deviation-on-capacious-path condition on one SD run.

    ``sd`` must carry a trace (``record_trace=True``).  Agent i is blocked by
    an earlier agent j when both deviate from the optimum and j's path
    saturates an edge of i's optimal path.  The detour through j must then
    keep ``n - |agents after j|`` units of residual capacity on every edge,
    measured right after j's stage.
    """
    if sd.trace is None or sd.ordering is None:
        raise ValueError("check_docp needs an SD allocation recorded with record_trace=True")
    if optimal is None:
        try:
            optimal = optimal_allocation(instance)
        except NotCertifiedError:
            return DoCPReport(False, [], certified=False)
    if not optimal.info.get("certified", True):
        return DoCPReport(False, [], certified=False)
    net = instance.network
    order = sd.ordering
    pos = {a: k for k, a in enumerate(order)}
    n = len(order)
    witnesses = []
    for i in order:
        star_i = opt_edges = optimal.paths[i].edges
        if sd.paths[i].edges == opt_edges:
            continue
        for j in order[: pos[i]]:
            if sd.paths[j].edges == optimal.paths[j].edges:
                continue
            after_j = sd.trace[pos[j]].residual_after
            shared = set(sd.paths[j].edges) & set(star_i)
            if not any(after_j[e] < 1 for e in shared):
                continue
            alpha, beta, gamma = alternative_path(instance, sd, optimal, i, j)
            required = n - (n - pos[j] - 1)
            if gamma is None:
                res_min = 0
            else:
                res_min = min((after_j[e] for e in gamma), default=math.inf)
            waypoints = (instance.agents[i].origin, alpha, instance.agents[j].origin,
                         instance.agents[j].declared, beta, instance.agents[i].destination)
            witnesses.append(DoCPWitness(i, j, alpha, beta, waypoints, gamma, res_min, required))
    return DoCPReport(all(w.ok for w in witnesses), witnesses)


def docp_holds_everywhere(instance: Instance, optimal: Allocation | None = None) -> bool:
    """DoCP on the SD run of every outcome-distinct ordering."""
    if optimal is None:
        optimal = optimal_allocation(instance)
    for order in distinct_orderings(instance):
        try:
            sd = serial_dictatorship(instance, order, record_trace=True)
        except InfeasibleError:
            return False
        if not check_docp(instance, sd, optimal):
            return False
    return True
