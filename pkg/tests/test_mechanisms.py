import itertools
import math
import random

import pytest

from oracles import exhaustive_opt, lexmin_shortest, random_instance
from tapmech.errors import InfeasibleError, NetworkError, NotCertifiedError, TooLargeError
from tapmech.instance import AgentProfile, Instance
from tapmech.instances import gen_fig1, gen_sd_tight
from tapmech.mechanisms import (
    Allocation,
    Bipartition,
    approx_report,
    bipolar_serial_dictatorship,
    bsd_swaps,
    count_distinct_orderings,
    distinct_orderings,
    dump_allocation,
    opt_lower_bound,
    optimal_allocation,
    parse_allocation,
    random_serial_dictatorship,
    rsd_expected_cost,
    serial_dictatorship,
    social_cost,
)
from tapmech.network import Edge, Path, RoadNetwork


def oracle_sd(instance, order):
    """SD with paths chosen by brute-force enumeration."""
    cap = [e.capacity for e in instance.network.edges]
    out = {}
    for i in order:
        a = instance.agents[i]
        found = lexmin_shortest(instance.network, a.origin, a.declared, cap)
        if found is None:
            return None
        for e in found[0]:
            cap[e] -= 1
        out[i] = found[0]
    return out


def names(inst, alloc, i):
    return [inst.node_name(v) for v in inst.network.path_nodes(alloc.paths[i].edges)]


class TestTwoAgentGadget:
    def test_sd_first_agent_grabs_the_short_edge(self):
        inst = gen_fig1(K=2)
        sd = serial_dictatorship(inst, [0, 1])
        assert names(inst, sd, 0) == ["A", "F", "E", "D"]
        assert names(inst, sd, 1) == ["A", "B", "C", "E", "G"]
        assert social_cost(sd, inst) == 8

    def test_sd_reversed_order(self):
        inst = gen_fig1(K=2)
        assert social_cost(serial_dictatorship(inst, [1, 0]), inst) == 7

    def test_optimum(self):
        inst = gen_fig1(K=2)
        opt = optimal_allocation(inst)
        assert opt.info["certified"]
        assert names(inst, opt, 0) == ["A", "B", "C", "D"]
        assert names(inst, opt, 1) == ["A", "F", "E", "G"]
        assert social_cost(opt, inst) == 7

    def test_rsd_exact_expectation(self):
        est = rsd_expected_cost(gen_fig1(K=2), "exact")
        assert est.exact and est.mean == 7.5 and est.samples == 2

    @pytest.mark.parametrize("K", [1, 2, 3, 5])
    def test_costs_scale_with_K(self, K):
        inst = gen_fig1(K=K)
        assert social_cost(serial_dictatorship(inst, [0, 1]), inst) == 2 * K + 4
        assert social_cost(optimal_allocation(inst), inst) == 2 * K + 3


class TestSerialDictatorship:
    @pytest.mark.parametrize("seed", range(80))
    def test_matches_bruteforce_sd(self, seed):
        rng = random.Random(seed)
        inst = random_instance(rng, max_nodes=6, max_agents=4)
        order = list(range(inst.n_agents))
        rng.shuffle(order)
        want = oracle_sd(inst, order)
        if want is None:
            with pytest.raises(InfeasibleError):
                serial_dictatorship(inst, order)
            return
        sd = serial_dictatorship(inst, order)
        assert {i: p.edges for i, p in sd.paths.items()} == want
        assert sd.is_feasible()
        # every SD path is a best reaction
        assert social_cost(sd, inst, strict=True) == pytest.approx(sd.assigned_weight())

    def test_infeasible_reports_stage_and_agent(self):
        net = RoadNetwork(["a", "b"], [Edge(0, 1, 1, 1)])
        inst = Instance(net, [AgentProfile("x", 0, 1), AgentProfile("y", 0, 1)])
        with pytest.raises(InfeasibleError) as err:
            serial_dictatorship(inst)
        assert err.value.stage == 2 and err.value.agent == "y"

    def test_bad_ordering(self):
        with pytest.raises(NetworkError):
            serial_dictatorship(gen_fig1(), [0, 0])

    def test_trace_records_residuals(self):
        inst = gen_fig1(K=2)
        sd = serial_dictatorship(inst, [0, 1], record_trace=True)
        a_f = inst.network.edge_by_names("A", "F")
        assert [s.agent for s in sd.trace] == [0, 1]
        assert sd.trace[0].residual_after[a_f] == 0

    def test_sd_tight_natural_order(self):
        for n in range(2, 7):
            inst = gen_sd_tight(n, 0.01)
            assert social_cost(serial_dictatorship(inst), inst) == 2 ** n - 1


class TestBipolar:
    def shared_instance(self):
        # both agents prefer the single unit edge a->b; a longer bypass exists
        net = RoadNetwork(["a", "b", "c"], [Edge(0, 1, 1, 1), Edge(0, 2, 2, 2), Edge(2, 1, 2, 2)])
        return Instance(net, [AgentProfile("1", 0, 1), AgentProfile("2", 0, 1)])

    def test_swap_when_common_best_path_in_x2(self):
        inst = self.shared_instance()
        x2_all = Bipartition.from_x1([], 3)
        assert bsd_swaps(inst, [0, 1], x2_all)
        alloc = bipolar_serial_dictatorship(inst, [0, 1], x2_all)
        assert alloc.info["bsd_swapped"] and alloc.ordering == [1, 0]
        assert alloc.paths[1].edges == (0,)

    def test_no_swap_when_path_touches_x1(self):
        inst = self.shared_instance()
        part = Bipartition.from_x1([0], 3)
        assert not bsd_swaps(inst, [0, 1], part)
        alloc = bipolar_serial_dictatorship(inst, [0, 1], part)
        assert alloc.paths[0].edges == (0,)

    def test_edge_mode_compares_first_edges(self):
        net = RoadNetwork(["o", "m", "d1", "d2"], [Edge(0, 1, 2, 1), Edge(1, 2, 1, 1), Edge(1, 3, 1, 1)])
        inst = Instance(net, [AgentProfile("1", 0, 2), AgentProfile("2", 0, 3)])
        part = Bipartition.from_x1([], 3)
        assert not bsd_swaps(inst, [0, 1], part, "path")
        assert bsd_swaps(inst, [0, 1], part, "edge")

    def test_single_agent(self):
        net = RoadNetwork(["a", "b"], [Edge(0, 1, 1, 1)])
        inst = Instance(net, [AgentProfile("1", 0, 1)])
        assert bipolar_serial_dictatorship(inst, [0], Bipartition.from_x1([], 1)).paths[0].edges == (0,)

    def test_bipartition_validation(self):
        with pytest.raises(NetworkError):
            Bipartition.from_x1([5], 3)


class TestRandomSD:
    def test_seeded(self):
        inst = gen_sd_tight(5)
        a = random_serial_dictatorship(inst, seed=4)
        b = random_serial_dictatorship(inst, seed=4)
        assert a.ordering == b.ordering and a.key() == b.key()

    @pytest.mark.parametrize("seed", range(30))
    def test_exact_mode_matches_full_permutation_average(self, seed):
        rng = random.Random(300 + seed)
        while True:
            inst = random_instance(rng, max_nodes=5, max_agents=4, max_cap=3)
            # duplicate an agent so the symmetry reduction actually kicks in
            a = inst.agents[0]
            inst = Instance(inst.network, inst.agents + [AgentProfile("dup", a.origin, a.destination)])
            try:
                costs = [social_cost(serial_dictatorship(inst, perm), inst)
                         for perm in itertools.permutations(range(inst.n_agents))]
                break
            except InfeasibleError:
                continue
        est = rsd_expected_cost(inst, "exact")
        assert est.mean == pytest.approx(math.fsum(costs) / len(costs), abs=1e-9)
        assert est.samples == count_distinct_orderings(
            [(a.origin, a.declared, a.destination) for a in inst.agents])

    def test_monte_carlo_converges_on_fig1(self):
        est = rsd_expected_cost(gen_fig1(K=2), "mc", trials=400, seed=1)
        assert not est.exact and est.samples == 400
        assert abs(est.mean - 7.5) <= 4 * est.stderr + 1e-9
        assert est.mean == rsd_expected_cost(gen_fig1(K=2), "mc", trials=400, seed=1).mean

    def test_exact_mode_refuses_large(self):
        net = RoadNetwork([str(i) for i in range(10)], [Edge(i, i + 1, 9, 1) for i in range(9)])
        inst = Instance(net, [AgentProfile(str(i), i, i + 1) for i in range(9)])
        with pytest.raises(TooLargeError):
            list(distinct_orderings(inst))

    def test_identical_agents_collapse(self):
        net = RoadNetwork(["a", "b"], [Edge(0, 1, 9, 1)])
        inst = Instance(net, [AgentProfile(str(i), 0, 1) for i in range(9)])
        assert list(distinct_orderings(inst)) == [list(range(9))]


class TestOptimum:
    @pytest.mark.parametrize("seed", range(60))
    def test_matches_exhaustive_enumeration(self, seed):
        rng = random.Random(5000 + seed)
        inst = random_instance(rng, max_nodes=6, max_agents=3, max_cap=1, max_weight=4)
        want = exhaustive_opt(inst)
        if want is None:
            with pytest.raises(InfeasibleError):
                optimal_allocation(inst)
            return
        opt = optimal_allocation(inst)
        assert opt.info["certified"]
        assert opt.assigned_weight() == pytest.approx(want[0], abs=1e-9)
        assert opt.key() == want[1]
        assert opt.is_feasible()
        assert opt_lower_bound(inst) <= opt.assigned_weight() + 1e-9

    def test_sd_tight_optimum(self):
        for n in range(2, 7):
            inst = gen_sd_tight(n, 0.01)
            opt = optimal_allocation(inst)
            assert social_cost(opt, inst) == pytest.approx(1 + 0.01 * n, abs=1e-12)

    def test_budget_exhaustion_is_flagged(self):
        inst = gen_sd_tight(6)
        alloc = None
        try:
            alloc = optimal_allocation(inst, budget=3)
        except NotCertifiedError:
            return
        assert not alloc.info["certified"] and alloc.info["budget_exhausted"]

    def test_infeasible(self):
        net = RoadNetwork(["a", "b"], [Edge(0, 1, 1, 1)])
        inst = Instance(net, [AgentProfile("x", 0, 1), AgentProfile("y", 0, 1)])
        with pytest.raises(InfeasibleError):
            optimal_allocation(inst)

    def test_lower_bound_fig1(self):
        assert opt_lower_bound(gen_fig1(K=2)) == 3 + 3


class TestReporting:
    def test_approx_report(self):
        inst = gen_sd_tight(5)
        rep = approx_report(inst, serial_dictatorship(inst), "exact")
        assert rep.ratio == pytest.approx(31 / 1.05, rel=1e-12)
        proxy = approx_report(inst, serial_dictatorship(inst), "proxy")
        assert proxy.reference_kind == "proxy" and proxy.ratio >= rep.ratio - 1e-12
        with pytest.raises(ValueError):
            approx_report(inst, serial_dictatorship(inst), "bogus")

    def test_allocation_text_round_trip(self):
        inst = gen_fig1(K=2)
        sd = serial_dictatorship(inst, [0, 1])
        text = dump_allocation(sd, inst)
        assert text.splitlines()[-1] == "sc 8"
        back = parse_allocation(text, inst)
        assert back.key() == sd.key()
        with pytest.raises(NetworkError):
            parse_allocation("assign 1 0,4\n", inst)

    def test_social_cost_uses_best_reaction(self):
        # assigned a detour while the direct road is free: cost is the direct road
        net = RoadNetwork(["a", "b", "c"], [Edge(0, 1, 1, 1), Edge(0, 2, 1, 1), Edge(2, 1, 1, 1)])
        inst = Instance(net, [AgentProfile("1", 0, 1)])
        alloc = Allocation.from_paths(net, {0: Path.from_edges(net, [1, 2])})
        assert social_cost(alloc, inst) == 1
        with pytest.raises(AssertionError):
            social_cost(alloc, inst, strict=True)
