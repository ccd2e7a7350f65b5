import random

import pytest

from oracles import random_network
from tapmech.errors import InfeasibleError, NetworkError
from tapmech.instance import AgentProfile, Instance
from tapmech.mechanisms import serial_dictatorship, social_cost
from tapmech.network import Edge, RoadNetwork, UNBOUNDED
from tapmech.timeexpand import HOLDOVER, build_time_expanded, default_horizon, expand_instance


def with_transits(net, rng, max_tau=2):
    return RoadNetwork(net.names, [Edge(e.tail, e.head, e.capacity, e.weight, rng.randint(0, max_tau))
                                   for e in net.edges])


@pytest.mark.parametrize("seed", range(20))
def test_structural_counts(seed):
    rng = random.Random(seed)
    net = with_transits(random_network(rng, rng.randint(2, 6), p=0.5), rng)
    T = rng.randint(1, 5)
    tx = build_time_expanded(net, T)
    for eid, e in enumerate(net.edges):
        copies = tx.copies(eid)
        assert len(copies) == max(T - e.transit, 0)
        for c in copies:
            x = tx.graph.edges[c]
            (u, t0), (v, t1) = tx.base_node(x.tail), tx.base_node(x.head)
            assert (u, v) == (e.tail, e.head) and t1 - t0 == e.transit
            assert (x.capacity, x.weight) == (e.capacity, e.weight)
    assert len(tx.holdover_edges) == net.n_nodes * (T - 1)
    for h in tx.holdover_edges:
        x = tx.graph.edges[h]
        assert x.capacity == UNBOUNDED and x.weight == 0
        assert x.head - x.tail == net.n_nodes
    assert tx.graph.n_nodes == net.n_nodes * T
    assert set(tx.unusable) == {eid for eid, e in enumerate(net.edges) if e.transit >= T}


def test_node_ids_and_bounds():
    net = RoadNetwork(["a", "b"], [Edge(0, 1, 1, 1, 1)])
    tx = build_time_expanded(net, 3)
    assert tx.node(1, 2) == 5 and tx.base_node(5) == (1, 2)
    with pytest.raises(NetworkError):
        tx.node(0, 3)
    with pytest.raises(NetworkError):
        build_time_expanded(net, 0)


def test_waiting_resolves_contention():
    # one unit-capacity road, two agents: the second waits a step
    net = RoadNetwork(["a", "b"], [Edge(0, 1, 1, 1, 1)])
    inst = Instance(net, [AgentProfile("1", 0, 1), AgentProfile("2", 0, 1)])
    expanded, tx = expand_instance(inst, horizon=3)
    sd = serial_dictatorship(expanded)
    sched = [tx.project(sd.paths[i].edges) for i in range(2)]
    assert sched == [[(0, 0)], [(0, 1)]]
    assert tx.schedule_feasible([sd.paths[i].edges for i in range(2)])
    assert social_cost(sd, expanded) == 2


def test_default_horizon():
    net = RoadNetwork(["a", "b", "c"], [Edge(0, 1, 1, 1, 2), Edge(1, 2, 1, 1, 1)])
    assert default_horizon(net, 3) == 3 * 2 * 2
    zero = RoadNetwork(["a", "b"], [Edge(0, 1, 1, 1, 0)])
    assert default_horizon(zero, 5) == 1


@pytest.mark.parametrize("seed", range(25))
def test_projection_is_capacity_feasible(seed):
    rng = random.Random(100 + seed)
    while True:
        base = with_transits(random_network(rng, rng.randint(3, 5), p=0.6, max_cap=1), rng, 1)
        agents = [AgentProfile(str(i + 1), rng.randrange(base.n_nodes), rng.randrange(base.n_nodes))
                  for i in range(rng.randint(1, 4))]
        inst = Instance(base, agents)
        expanded, tx = expand_instance(inst, horizon=8)
        try:
            sd = serial_dictatorship(expanded)
            break
        except InfeasibleError:
            continue
    paths = [sd.paths[i].edges for i in range(len(agents))]
    assert tx.schedule_feasible(paths)
    for i, a in enumerate(agents):
        sched = tx.project(paths[i])
        t = 0
        node = a.origin
        for eid, dep in sched:
            assert dep >= t and base.edges[eid].tail == node
            node = base.edges[eid].head
            t = dep + base.edges[eid].transit
        assert node == a.destination
