"""Agents, instances and the line-oriented ``tap 1`` instance file format.

Format::

    tap 1
    # free comments
    meta <key> <value>
    node <name>
    edge <tail> <head> <capacity> <weight> <transit>
    agent <name> <origin> <destination>

Files written by ``dumps`` parse back to an instance that writes the same
bytes.  Comment lines before the first ``node`` line are kept.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

from .errors import NetworkError
from .network import Edge, RoadNetwork

HEADER = "tap 1"


@dataclass(frozen=True)
class AgentProfile:
    name: str
    origin: int
    destination: int
    declared: int | None = None

    def __post_init__(self):
        if self.declared is None:
            object.__setattr__(self, "declared", self.destination)


@dataclass
class Instance:
    network: RoadNetwork
    agents: list[AgentProfile]
    meta: dict[str, str] = field(default_factory=dict)
    comments: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.network.n_nodes
        for a in self.agents:
            for v in (a.origin, a.destination, a.declared):
                if not 0 <= v < n:
                    raise NetworkError(f"agent {a.name} references unknown node {v}")

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def agent_index(self, name) -> int:
        for i, a in enumerate(self.agents):
            if a.name == str(name):
                return i
        raise NetworkError(f"unknown agent {name!r}")

    def with_declared(self, agent: int, node: int) -> "Instance":
        agents = list(self.agents)
        agents[agent] = replace(agents[agent], declared=node)
        return Instance(self.network, agents, dict(self.meta), list(self.comments))

    def with_network(self, net: RoadNetwork) -> "Instance":
        return Instance(net, list(self.agents), dict(self.meta), list(self.comments))

    def truthful(self) -> "Instance":
        agents = [replace(a, declared=a.destination) for a in self.agents]
        return Instance(self.network, agents, dict(self.meta), list(self.comments))

    def node_name(self, v: int) -> str:
        return self.network.names[v]


def fmt_number(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        if x.is_integer() and abs(x) < 1e15:
            return str(int(x))
        return repr(x)
    return str(x)


def parse_number(token: str):
    if token == "inf":
        return math.inf
    try:
        return int(token)
    except ValueError:
        return float(token)


def dumps(instance: Instance) -> str:
    net = instance.network
    lines = [HEADER]
    lines.extend(instance.comments)
    meta = dict(instance.meta)
    if net.symmetric:
        meta["symmetric"] = "true"
    for key in sorted(meta):
        lines.append(f"meta {key} {meta[key]}")
    for name in net.names:
        lines.append(f"node {name}")
    for e in net.edges:
        lines.append(
            "edge {} {} {} {} {}".format(
                net.names[e.tail], net.names[e.head], fmt_number(e.capacity),
                fmt_number(e.weight), e.transit,
            )
        )
    for a in instance.agents:
        lines.append(f"agent {a.name} {net.names[a.origin]} {net.names[a.destination]}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Instance:
    lines = text.splitlines()
    body = [(no, ln) for no, ln in enumerate(lines, 1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not body or body[0][1].strip() != HEADER:
        raise NetworkError("line 1: missing 'tap 1' header")
    comments = []
    for ln in lines[1:]:
        if ln.lstrip().startswith("node"):
            break
        if ln.lstrip().startswith("#"):
            comments.append(ln)
    names: list[str] = []
    index: dict[str, int] = {}
    edges: list[Edge] = []
    raw_agents = []
    meta: dict[str, str] = {}
    for no, ln in body[1:]:
        parts = ln.split()
        kind = parts[0]
        try:
            if kind == "meta":
                meta[parts[1]] = " ".join(parts[2:])
            elif kind == "node":
                if len(parts) != 2:
                    raise ValueError("expected 'node <id>'")
                if parts[1] in index:
                    raise ValueError(f"duplicate node {parts[1]}")
                index[parts[1]] = len(names)
                names.append(parts[1])
            elif kind == "edge":
                if len(parts) != 6:
                    raise ValueError("expected 'edge <tail> <head> <capacity> <weight> <transit>'")
                tau = parse_number(parts[5])
                if not isinstance(tau, int):
                    raise ValueError("transit time must be an integer")
                edges.append(
                    Edge(index[parts[1]], index[parts[2]], parse_number(parts[3]), parse_number(parts[4]), tau)
                )
            elif kind == "agent":
                if len(parts) != 4:
                    raise ValueError("expected 'agent <id> <origin> <destination>'")
                raw_agents.append((parts[1], index[parts[2]], index[parts[3]]))
            else:
                raise ValueError(f"unknown directive {kind!r}")
        except KeyError as exc:
            raise NetworkError(f"line {no}: unknown node {exc.args[0]!r}") from None
        except ValueError as exc:
            raise NetworkError(f"line {no}: {exc}") from None
    symmetric = meta.pop("symmetric", "false") == "true"
    net = RoadNetwork(names, edges, symmetric=symmetric)
    agents = [AgentProfile(name, o, d) for name, o, d in raw_agents]
    return Instance(net, agents, meta, comments)


def read_instance(path) -> Instance:
    return loads(FsPath(path).read_text())


def write_instance(instance: Instance, path) -> None:
    FsPath(path).write_text(dumps(instance))
