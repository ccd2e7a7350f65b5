import math
import os
import random

import networkx as nx
import pytest

from oracles import random_network, to_nx
from tapmech.bench import (
    CSV_COLUMNS,
    ExperimentConfig,
    ResultRow,
    emit_csv,
    extract_subgraph,
    format_csv,
    load_source,
    parse_capacity_policy,
    parse_dimacs,
    parse_rsd_mode,
    read_csv,
    run_experiment,
    synthesize_capacities,
    synthetic_road_network,
    write_dimacs,
)
from tapmech.errors import NetworkError
from tapmech.instance import AgentProfile, Instance
from tapmech.instances import gen_fig1, gen_sd_tight
from tapmech.network import Edge, RoadNetwork, is_strongly_connected

HEADER = "gamma,sc_sd,sc_rsd_mean,sc_rsd_stderr,sc_ref,ref_kind,ratio_sd,ratio_rsd,nodes,edges,outdeg_avg,cap_avg"


class TestDimacs:
    def test_toy_file(self, tmp_path):
        p = tmp_path / "toy.gr"
        p.write_text("c toy\np sp 2 1\na 1 2 7\n")
        net = parse_dimacs(p)
        assert net.n_nodes == 2 and net.edges == (Edge(0, 1, 27, 7, 0),)

    @pytest.mark.parametrize("body, line", [
        ("p sp 2 1\na 1 3 7\n", 2),
        ("a 1 2 7\n", 1),
        ("p sp 2 1\na 1 2\n", 2),
        ("p sp 2 1\nx\n", 2),
        ("p sp 2 1\na 1 2 -1\n", 2),
    ])
    def test_malformed(self, tmp_path, body, line):
        p = tmp_path / "bad.gr"
        p.write_text(body)
        with pytest.raises(NetworkError, match=f":{line}:"):
            parse_dimacs(p)

    def test_round_trip(self, tmp_path):
        net = synthetic_road_network(5, seed=2)
        write_dimacs(net, tmp_path / "g.gr")
        back = parse_dimacs(tmp_path / "g.gr", "constant:2")
        assert back.edges == net.edges

    @pytest.mark.skipif(not os.environ.get("TAP_ROME99"), reason="set TAP_ROME99 to the rome99.gr path")
    def test_rome99_header(self):
        net = parse_dimacs(os.environ["TAP_ROME99"])
        assert (net.n_nodes, net.n_edges) == (3353, 8870)
        assert net.stats()["cap_avg"] == pytest.approx(27)


class TestCapacityPolicy:
    def test_constant_and_degree(self):
        arcs = [(0, 1), (0, 2), (1, 0)]
        assert synthesize_capacities(3, arcs, "constant:27") == [27, 27, 27]
        assert synthesize_capacities(3, arcs, "degree:1.5") == [3, 3, 2]

    @pytest.mark.parametrize("bad", ["const:3", "degree", "constant:"])
    def test_bad_policy(self, bad):
        with pytest.raises(ValueError):
            parse_capacity_policy(bad)


class TestSynthetic:
    def test_connected_and_seeded(self):
        a = synthetic_road_network(12, seed=5)
        assert is_strongly_connected(a) and a.is_symmetric()
        assert a.edges == synthetic_road_network(12, seed=5).edges
        full = 2 * 2 * 12 * 11
        assert 0.6 * full < a.n_edges < 0.9 * full

    def test_prefix_is_compact(self):
        net = synthetic_road_network(30, seed=1)
        assert is_strongly_connected(extract_subgraph(net, 200))


class TestExtractSubgraph:
    def test_identity(self):
        net = synthetic_road_network(4)
        assert extract_subgraph(net, net.n_nodes) is net

    def test_path_shortcut(self):
        # a -> b -> c with b removed (ids: a=0, c=1, b=2)
        net = RoadNetwork(["a", "c", "b"], [Edge(0, 2, 3, 2, 1), Edge(2, 1, 5, 4, 2)])
        with pytest.raises(NetworkError):
            extract_subgraph(net, 2)  # one-way only, so not strongly connected
        both = RoadNetwork(["a", "c", "b"], list(net.edges) + [Edge(1, 2, 5, 4, 2), Edge(2, 0, 3, 2, 1)])
        sub = extract_subgraph(both, 2)
        assert sorted(sub.edges, key=lambda e: e.tail) == [Edge(0, 1, 3, 6, 3), Edge(1, 0, 3, 6, 3)]

    @pytest.mark.parametrize("seed", range(8))
    def test_distances_preserved(self, seed):
        rng = random.Random(seed)
        while True:
            net = random_network(rng, 50, p=0.06, max_weight=9)
            if is_strongly_connected(net):
                break
        sub = extract_subgraph(net, 30)
        full = dict(nx.all_pairs_dijkstra_path_length(to_nx(net)))
        part = dict(nx.all_pairs_dijkstra_path_length(to_nx(sub)))
        for u in range(30):
            for v in range(30):
                assert part[u][v] == pytest.approx(full[u][v])

    def test_rejects_bad_count(self):
        with pytest.raises(ValueError):
            extract_subgraph(synthetic_road_network(3), 0)


def small_grid():
    return extract_subgraph(synthetic_road_network(8, seed=3, capacity_policy="constant:2"), 30)


class TestExperiment:
    def test_single_agent_ratio_one(self):
        inst = Instance(gen_fig1().network, [AgentProfile("1", 0, 3)])
        rows = run_experiment(ExperimentConfig(inst, gammas=(1, 2), reference="exact", rsd="exact"))
        for r in rows:
            assert r.ratio_sd == 1 and r.ratio_rsd == 1

    def test_sd_tight_exact_ratio(self):
        rows = run_experiment(ExperimentConfig(gen_sd_tight(5), gammas=(1,), reference="exact", rsd="mc:3"))
        assert rows[0].ratio_sd == pytest.approx(31 / 1.05, rel=1e-12)
        assert rows[0].ref_kind == "exact"

    def test_exact_ratios_at_least_one(self):
        rows = run_experiment(ExperimentConfig(small_grid(), gammas=(1, 1.5, 2), agents=4, trials=3,
                                               reference="exact", rsd="exact", seed=2))
        for r in rows:
            assert r.trials + r.infeasible == 3
            if r.trials:
                assert r.ratio_sd >= 1 - 1e-12 and r.ratio_rsd >= 1 - 1e-12

    def test_stats_come_from_augmented_graph(self):
        rows = run_experiment(ExperimentConfig(small_grid(), gammas=(1, 2), agents=3, trials=1))
        assert rows[1].cap_avg == pytest.approx(2 * rows[0].cap_avg)
        assert len(rows) == 2

    def test_infeasible_rows_are_flagged(self):
        net = RoadNetwork(["a", "b", "c"], [Edge(0, 1, 1, 1), Edge(1, 0, 1, 1), Edge(1, 2, 1, 1),
                                            Edge(2, 1, 1, 1)])
        inst = Instance(net, [AgentProfile(str(i), 0, 2) for i in range(3)])
        rows = run_experiment(ExperimentConfig(inst, gammas=(1, 3), rsd="mc:2"))
        assert rows[0].infeasible == 1 and rows[0].trials == 0 and math.isnan(rows[0].ratio_sd)
        assert rows[1].infeasible == 0 and rows[1].ratio_sd == 1

    def test_deterministic_csv(self):
        cfg = dict(gammas=(1, 1.5), agents=6, trials=2, seed=9, rsd="mc:4")
        a = format_csv(run_experiment(ExperimentConfig(small_grid(), **cfg)))
        b = format_csv(run_experiment(ExperimentConfig(small_grid(), **cfg)))
        assert a == b

    @pytest.mark.parametrize("kw", [dict(gammas=(0.5,)), dict(trials=0), dict(reference="x"), dict(rsd="mc:0")])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(gen_fig1(), **kw)

    def test_rsd_mode(self):
        assert parse_rsd_mode("exact") == ("exact", 0)
        assert parse_rsd_mode("mc:7") == ("mc", 7)


class TestCsv:
    def test_header_only(self, tmp_path):
        emit_csv([], tmp_path / "r.csv")
        assert (tmp_path / "r.csv").read_text() == HEADER + "\n"
        assert ",".join(CSV_COLUMNS) == HEADER

    def test_one_row_round_trip(self, tmp_path):
        row = ResultRow(1.5, 10, 11, 0.5, 9, "proxy", 10 / 9, 11 / 9, 4, 6, 1.5, 2.25)
        emit_csv([row], tmp_path / "r.csv", comments=["seed 3"])
        text = (tmp_path / "r.csv").read_text()
        assert text.splitlines()[0] == "# seed 3"
        assert text.splitlines()[2] == \
            "1.500000,10.000000,11.000000,0.500000,9.000000,proxy,1.111111,1.222222,4,6,1.500000,2.250000"
        rows = read_csv(tmp_path / "r.csv")
        assert len(rows) == 1 and rows[0]["ref_kind"] == "proxy" and float(rows[0]["gamma"]) == 1.5


def test_load_source(tmp_path):
    assert load_source("gen:fig1").n_agents == 2
    assert load_source("gen:sd-tight:3").n_agents == 3
    assert load_source("gen:chain:2").n_agents == 3
    assert load_source("gen:grid:4").n_nodes == 16
    with pytest.raises(ValueError):
        load_source("gen:nope")
