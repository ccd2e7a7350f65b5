"""DIMACS ingestion, subgraph extraction and the resource-augmentation sweep."""
from __future__ import annotations

import csv
import heapq
import io
import math
import random
import statistics
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, NetworkError, NotCertifiedError
from .instance import AgentProfile, Instance, read_instance
from .instances import augment, gen_chain, gen_fig1, gen_sd_tight, random_population
from .mechanisms import (
    opt_lower_bound,
    optimal_allocation,
    rsd_expected_cost,
    serial_dictatorship,
    social_cost,
)
from .network import WEIGHT_TOL, Edge, RoadNetwork, is_strongly_connected

DEFAULT_GAMMAS = (1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
CSV_COLUMNS = (
    "gamma", "sc_sd", "sc_rsd_mean", "sc_rsd_stderr", "sc_ref", "ref_kind",
    "ratio_sd", "ratio_rsd", "nodes", "edges", "outdeg_avg", "cap_avg",
)


# --- capacity policies -------------------------------------------------------

def parse_capacity_policy(policy: str) -> tuple[str, float]:
    kind, _, value = policy.partition(":")
    if kind not in ("constant", "degree") or not value:
        raise ValueError(f"capacity policy must be constant:<c> or degree:<scale>, got {policy!r}")
    return kind, float(value)


def synthesize_capacities(n_nodes: int, arcs: Sequence[tuple[int, int]], policy: str) -> list[int]:
    """Capacities for arcs that carry none: a constant, or scale x tail out-degree."""
    kind, value = parse_capacity_policy(policy)
    if kind == "constant":
        c = max(1, int(round(value)))
        return [c] * len(arcs)
    outdeg = [0] * n_nodes
    for u, _ in arcs:
        outdeg[u] += 1
    return [max(1, int(math.floor(value * outdeg[u] + 0.5))) for u, _ in arcs]


# --- DIMACS ------------------------------------------------------------------

def parse_dimacs(path, capacity_policy: str = "constant:27") -> RoadNetwork:
    """Read a DIMACS shortest-path ``.gr`` file.

    Distance files carry no capacities, so they come from ``capacity_policy``;
    transit times are 0.
    """
    n = None
    arcs: list[tuple[int, int]] = []
    weights: list[float] = []
    with open(path) as fh:
        for no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0] == "c":
                continue
            try:
                if parts[0] == "p":
                    if len(parts) != 4 or parts[1] != "sp":
                        raise ValueError("expected 'p sp <nodes> <arcs>'")
                    n = int(parts[2])
                    declared_arcs = int(parts[3])
                elif parts[0] == "a":
                    if n is None:
                        raise ValueError("arc before problem line")
                    if len(parts) != 4:
                        raise ValueError("expected 'a <tail> <head> <weight>'")
                    u, v = int(parts[1]) - 1, int(parts[2]) - 1
                    w = float(parts[3])
                    if not (0 <= u < n and 0 <= v < n):
                        raise ValueError("arc endpoint out of range")
                    if w < 0:
                        raise ValueError("negative arc weight")
                    if u == v:
                        warnings.warn(f"line {no}: self-loop dropped")
                        continue
                    arcs.append((u, v))
                    weights.append(int(w) if w.is_integer() else w)
                else:
                    raise ValueError(f"unknown line type {parts[0]!r}")
            except ValueError as exc:
                raise NetworkError(f"{path}:{no}: {exc}") from None
    if n is None:
        raise NetworkError(f"{path}: missing problem line")
    if len(arcs) != declared_arcs:
        warnings.warn(f"{path}: header declares {declared_arcs} arcs, read {len(arcs)}")
    caps = synthesize_capacities(n, arcs, capacity_policy)
    edges = [Edge(u, v, c, w, 0) for (u, v), c, w in zip(arcs, caps, weights)]
    return RoadNetwork([str(i + 1) for i in range(n)], edges)


def write_dimacs(net: RoadNetwork, path) -> None:
    from .instance import fmt_number

    lines = [f"p sp {net.n_nodes} {net.n_edges}"]
    lines += [f"a {e.tail + 1} {e.head + 1} {fmt_number(e.weight)}" for e in net.edges]
    FsPath(path).write_text("\n".join(lines) + "\n")


def synthetic_road_network(side: int, seed=0, capacity_policy: str = "constant:2", drop: float = 0.25) -> RoadNetwork:
    """Two-way grid roads with random lengths and about ``drop`` of the roads removed.

    A random spanning tree of the grid is always kept, so the result is
    strongly connected.  Node ids grow with distance from one corner, so
    any prefix of the ids is a compact patch of the map.
    """
    rng = random.Random(seed)
    n = side * side
    cells = sorted(((r, c) for r in range(side) for c in range(side)), key=lambda rc: (rc[0] + rc[1], rc[0]))
    cell_id = {rc: i for i, rc in enumerate(cells)}
    roads = []
    for (r, c), v in cell_id.items():
        if c + 1 < side:
            roads.append((v, cell_id[r, c + 1]))
        if r + 1 < side:
            roads.append((v, cell_id[r + 1, c]))
    rng.shuffle(roads)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    kept = []
    for u, v in roads:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            kept.append((u, v))
        elif rng.random() >= 2 * drop:  # non-tree roads are about half of all roads
            kept.append((u, v))
    kept.sort()
    arcs = []
    lengths = []
    for u, v in kept:
        w = rng.randint(100, 1000)
        arcs += [(u, v), (v, u)]
        lengths += [w, w]
    caps = synthesize_capacities(n, arcs, capacity_policy)
    edges = [Edge(u, v, c, w, 0) for (u, v), c, w in zip(arcs, caps, lengths)]
    return RoadNetwork([str(i + 1) for i in range(n)], edges)


# --- subgraph extraction -------------------------------------------------------

def _removed_only_distances(net: RoadNetwork, u: int, n_keep: int):
    """Shortest distances from kept node u to kept nodes through removed nodes only."""
    dist = {u: 0.0}
    cap = {u: math.inf}
    tau = {u: 0}
    heap = [(0.0, u)]
    done = set()
    found: dict[int, tuple[float, float, int]] = {}
    while heap:
        d, x = heapq.heappop(heap)
        if x in done:
            continue
        done.add(x)
        for eid in net.out_edges[x]:
            e = net.edges[eid]
            y = e.head
            nd = d + e.weight
            ncap = min(cap[x], e.capacity)
            ntau = tau[x] + e.transit
            if y < n_keep:
                if x != u and y != u and (y not in found or nd < found[y][0]):
                    found[y] = (nd, ncap, ntau)
                continue
            if nd < dist.get(y, math.inf):
                dist[y], cap[y], tau[y] = nd, ncap, ntau
                heapq.heappush(heap, (nd, y))
    return found


def _floyd_warshall(n: int, edges) -> np.ndarray:
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for u, v, w in edges:
        if w < d[u, v]:
            d[u, v] = w
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def extract_subgraph(net: RoadNetwork, n_keep: int) -> RoadNetwork:
    """Keep the first ``n_keep`` nodes and bridge removed regions with shortcut edges.

    A shortcut u->v carries the shortest u->v distance through removed nodes
    only, the bottleneck capacity and total transit of that route.  Shortcuts
    that another retained route already matches are dropped, which keeps
    every retained pairwise distance unchanged.
    """
    if not 1 <= n_keep <= net.n_nodes:
        raise ValueError(f"node count must be in [1, {net.n_nodes}]")
    if n_keep == net.n_nodes:
        return net
    base = [e for e in net.edges if e.tail < n_keep and e.head < n_keep]
    shortcuts = {}
    for u in range(n_keep):
        for v, (d, c, t) in _removed_only_distances(net, u, n_keep).items():
            shortcuts[(u, v)] = (d, c, t)
    d = _floyd_warshall(n_keep, [(e.tail, e.head, e.weight) for e in base]
                        + [(u, v, s[0]) for (u, v), s in shortcuts.items()])
    direct: dict[tuple[int, int], float] = {}
    for e in base:
        key = (e.tail, e.head)
        direct[key] = min(direct.get(key, math.inf), e.weight)
    extra = []
    for (u, v), (w, c, t) in sorted(shortcuts.items()):
        if direct.get((u, v), math.inf) <= w + WEIGHT_TOL:
            continue
        via = d[u, :] + d[:, v]
        via[u] = via[v] = np.inf
        if via.min() <= w + WEIGHT_TOL:
            continue
        extra.append(Edge(u, v, c, w, t))
    sub = RoadNetwork(net.names[:n_keep], base + extra)
    if not is_strongly_connected(sub):
        raise NetworkError(f"subgraph on {n_keep} nodes is not strongly connected; try a larger node count")
    return sub


# --- experiment pipeline --------------------------------------------------------

@dataclass
class ExperimentConfig:
    source: object  # RoadNetwork (random populations) or Instance (fixed agents)
    gammas: Sequence[float] = DEFAULT_GAMMAS
    agents: int | None = None
    trials: int = 1
    seed: int = 0
    reference: str = "proxy"
    rsd: str = "mc:10"
    label: str = ""

    def __post_init__(self):
        if any(g < 1 for g in self.gammas):
            raise ValueError("gamma values must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.reference not in ("exact", "proxy"):
            raise ValueError("reference must be exact or proxy")
        parse_rsd_mode(self.rsd)


def parse_rsd_mode(text: str) -> tuple[str, int]:
    if text == "exact":
        return "exact", 0
    if text.startswith("mc:"):
        k = int(text[3:])
        if k < 1:
            raise ValueError("monte-carlo trial count must be >= 1")
        return "mc", k
    raise ValueError(f"rsd mode must be exact or mc:<trials>, got {text!r}")


@dataclass
class ResultRow:
    gamma: float
    sc_sd: float
    sc_rsd_mean: float
    sc_rsd_stderr: float
    sc_ref: float
    ref_kind: str
    ratio_sd: float
    ratio_rsd: float
    nodes: int
    edges: int
    outdeg_avg: float
    cap_avg: float
    trials: int = 0
    infeasible: int = 0
    per_trial: list = field(default_factory=list, repr=False)


def _population(config: ExperimentConfig, trial: int) -> tuple[RoadNetwork, list[AgentProfile]]:
    src = config.source
    if isinstance(src, Instance):
        return src.network, list(src.agents)
    seed = config.seed * 1_000_003 + trial
    return src, random_population(src, config.agents, seed)


def _trial(config: ExperimentConfig, net: RoadNetwork, agents, trial: int):
    inst = Instance(net, agents)
    mode, k = parse_rsd_mode(config.rsd)
    sd = serial_dictatorship(inst)
    sc_sd = social_cost(sd, inst)
    est = rsd_expected_cost(inst, mode, trials=k, seed=config.seed * 7_919 + trial)
    if config.reference == "exact":
        ref = optimal_allocation(inst)
        if not ref.info.get("certified", True):
            raise NotCertifiedError("exact reference not certified")
        sc_ref = social_cost(ref, inst)
    else:
        sc_ref = opt_lower_bound(inst)
    return sc_sd, est.mean, est.stderr, sc_ref


def _ratio(cost, ref):
    if ref == 0:
        return 1.0 if cost == 0 else math.inf
    return cost / ref


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """One row per gamma, averaged over trials.

    Each trial draws one population and reuses it across the gamma sweep.
    SD runs with agents in population order.  The reference (exact optimum
    or the shortest-path lower bound) is computed on the same augmented
    network the mechanisms ran on.  Trials that turn out infeasible are
    counted in ``infeasible`` and left out of the averages.
    """
    populations = [_population(config, t) for t in range(config.trials)]
    rows = []
    for gamma in config.gammas:
        results = []
        infeasible = 0
        stats = None
        for t, (base, agents) in enumerate(populations):
            net = augment(base, gamma)
            if stats is None:
                stats = net.stats()
            try:
                results.append(_trial(config, net, agents, t))
            except InfeasibleError:
                infeasible += 1
        if results:
            sc_sd = statistics.fmean(r[0] for r in results)
            sc_rsd = statistics.fmean(r[1] for r in results)
            stderr = math.sqrt(math.fsum(r[2] ** 2 for r in results)) / len(results)
            sc_ref = statistics.fmean(r[3] for r in results)
            ratio_sd = statistics.fmean(_ratio(r[0], r[3]) for r in results)
            ratio_rsd = statistics.fmean(_ratio(r[1], r[3]) for r in results)
        else:
            sc_sd = sc_rsd = stderr = sc_ref = ratio_sd = ratio_rsd = math.nan
        rows.append(ResultRow(
            float(gamma), sc_sd, sc_rsd, stderr, sc_ref, config.reference, ratio_sd, ratio_rsd,
            stats["nodes"], stats["edges"], stats["outdeg_avg"], stats["cap_avg"],
            trials=len(results), infeasible=infeasible, per_trial=results,
        ))
    return rows


_TEXT_COLUMNS = ("ref_kind", "nodes", "edges")


def _cell(col: str, value) -> str:
    if col in _TEXT_COLUMNS:
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def format_csv(rows: Sequence[ResultRow], comments: Sequence[str] = ()) -> str:
    """Fixed-column CSV; ``comments`` become leading ``#`` lines."""
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_cell(col, getattr(row, col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def emit_csv(rows: Sequence[ResultRow], path, comments: Sequence[str] = ()) -> None:
    FsPath(path).write_text(format_csv(rows, comments))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


def load_source(spec: str, capacity_policy: str = "constant:27"):
    """``gen:fig1``, ``gen:sd-tight:<n>``, ``gen:chain:<k>``, ``gen:grid:<side>``,
    a ``.tap`` instance file or a DIMACS ``.gr`` file."""
    if spec.startswith("gen:"):
        name, _, arg = spec[4:].partition(":")
        if name == "fig1":
            return gen_fig1()
        if name == "sd-tight":
            return gen_sd_tight(int(arg or 5))
        if name == "chain":
            return gen_chain(int(arg or 2))
        if name == "grid":
            return synthetic_road_network(int(arg or 20), capacity_policy=capacity_policy)
        raise ValueError(f"unknown generator {name!r}")
    if spec.endswith(".tap"):
        return read_instance(spec)
    return parse_dimacs(spec, capacity_policy)
