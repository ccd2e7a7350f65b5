"""Command-line front end: ``tapmech <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (infeasible instance,
uncertified optimum, malformed input file) and 2 on a usage error.
Data goes to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path as FsPath

from . import audit, bench, instances, mechanisms
from .errors import NotCertifiedError, TapError
from .instance import Instance, dumps, fmt_number, read_instance
from .mechanisms import Bipartition
from .network import RoadNetwork, is_strongly_connected
from .timeexpand import expand_instance

log = logging.getLogger("tapmech")


class UsageError(Exception):
    pass


# --- helpers -------------------------------------------------------------------

def _emit(text: str, out: str | None) -> None:
    if out:
        FsPath(out).write_text(text)
    else:
        sys.stdout.write(text)


def _with_comments(instance: Instance, *lines: str) -> Instance:
    instance.comments = list(instance.comments) + [f"# {ln}" for ln in lines]
    return instance


def _ordering(instance: Instance, text: str | None):
    if text is None:
        return None
    try:
        return [instance.agent_index(name.strip()) for name in text.split(",") if name.strip()]
    except TapError as exc:
        raise UsageError(str(exc)) from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _bipartition(instance: Instance, text: str | None) -> Bipartition:
    ids = [int(x) for x in text.split(",") if x.strip()] if text else []
    return Bipartition.from_x1(ids, instance.network.n_edges)


def _load_network(spec: str, policy: str) -> RoadNetwork:
    src = bench.load_source(spec, policy)
    return src.network if isinstance(src, Instance) else src


def _mechanism(args, instance: Instance):
    order = _ordering(instance, args.ordering)
    if args.mech == "sd":
        return mechanisms.sd_mechanism(order)
    if args.mech == "bsd":
        if order is None:
            order = list(range(instance.n_agents))
        return mechanisms.bsd_mechanism(order, _bipartition(instance, args.x1), args.bsd_mode)
    if args.mech == "opt":
        return mechanisms.optimal_mechanism(budget=args.budget)
    if args.mech == "rsd":
        order = mechanisms.random_ordering(instance.n_agents, args.seed)
        return mechanisms.sd_mechanism(order)
    raise UsageError(f"unknown mechanism {args.mech!r}")


# --- subcommands -----------------------------------------------------------------

def cmd_gen_instance(args) -> int:
    kind = args.kind
    if kind == "fig1":
        inst = instances.gen_fig1(args.K, args.eps)
    elif kind == "sd-tight":
        inst = instances.gen_sd_tight(args.n, args.eps)
    elif kind == "chain":
        inst = instances.gen_chain(args.k, args.eps)
    elif kind == "tap-plus":
        if not args.orders:
            raise UsageError("tap-plus needs --orders, e.g. '0,1,2;2,1,0'")
        orders = [[int(x) for x in part.split(",")] for part in args.orders.split(";")]
        m = len(orders[0])
        profile = instances.PreferenceProfile.from_orders(m, orders)
        inst = instances.gen_tap_plus(profile, args.eps, args.all_strict)
    elif kind == "yao":
        dist = instances.gen_yao_distribution(args.eps)
        prob, inst = dist[args.variant]
        inst = _with_comments(inst, f"probability {prob}")
    elif kind == "random":
        if not args.graph:
            raise UsageError("random needs --graph")
        net = _load_network(args.graph, args.capacity_policy)
        agents = instances.random_population(net, args.agents, args.seed)
        meta = {"generator": "random", "seed": str(args.seed), "capacity_policy": args.capacity_policy}
        inst = Instance(net, agents, meta)
    else:
        raise UsageError(f"unknown generator {kind!r}")
    _emit(dumps(inst), args.out)
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    alloc = _mechanism(args, inst)(inst)
    header = [f"mech {args.mech}"]
    if alloc.ordering is not None:
        header.append("ordering " + ",".join(inst.agents[i].name for i in alloc.ordering))
    if args.mech == "rsd":
        header.append(f"seed {args.seed}")
    if "bsd_swapped" in alloc.info:
        header.append(f"bsd_swapped {str(alloc.info['bsd_swapped']).lower()}")
    certified = alloc.info.get("certified", True)
    if args.mech == "opt":
        header.append(f"certified {str(certified).lower()}")
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["agent", "edges", "cost"])
        for i, a in enumerate(inst.agents):
            cost = mechanisms.agent_cost(inst, alloc, i)
            w.writerow([a.name, " ".join(map(str, alloc.paths[i].edges)), fmt_number(float(cost))])
        text = buf.getvalue()
    else:
        text = "".join(f"# {h}\n" for h in header) + mechanisms.dump_allocation(alloc, inst)
    if args.expected and args.mech == "rsd":
        mode, k = bench.parse_rsd_mode(args.expected)
        est = mechanisms.rsd_expected_cost(inst, mode, trials=k or 1, seed=args.seed)
        text += f"# expected_sc {fmt_number(est.mean)} stderr {fmt_number(est.stderr)} samples {est.samples}\n"
    _emit(text, args.out)
    if not certified:
        print("warning: optimum not certified within the search budget", file=sys.stderr)
        return 1
    return 0


def cmd_audit(args) -> int:
    inst = read_instance(args.instance)
    mech = _mechanism(args, inst)
    agents = range(inst.n_agents) if args.agent is None else [inst.agent_index(args.agent)]
    reports = []
    for i in agents:
        reports.extend(audit.find_manipulations(inst, mech, i))
    text = audit.format_manipulations(inst, reports, args.format)
    if args.format == "text":
        lines = [f"# mech {args.mech}"]
        if args.mech == "rsd":
            lines.append(f"# seed {args.seed}")
        text = "".join(ln + "\n" for ln in lines) + text
        checks = [c for c in (args.checks or "").split(",") if c]
        alloc = mech(inst)
        for check in checks:
            text += _run_check(check, inst, mech, alloc, agents)
        text += f"manipulations {len(reports)}\n"
    _emit(text, args.out)
    return 0


def _run_check(check, inst, mech, alloc, agents) -> str:
    if check == "non-bossy":
        ok = all(audit.check_non_bossy(inst, mech, i) for i in agents)
        return f"check non-bossy {str(ok).lower()}\n"
    if check == "best-reaction":
        ok = all(audit.check_best_reactions(inst, alloc))
        return f"check best-reaction {str(ok).lower()}\n"
    if check == "pareto":
        verdict = audit.check_pareto_exhaustive(inst, alloc)
        return f"check pareto {str(verdict.pareto).lower()} certified {str(verdict.certified).lower()}\n"
    if check == "docp":
        if alloc.ordering is None:
            raise UsageError("the docp check needs an SD-family mechanism")
        sd = mechanisms.serial_dictatorship(inst, alloc.ordering, record_trace=True)
        report = audit.check_docp(inst, sd)
        return f"check docp {str(report.ok).lower()} witnesses {len(report.witnesses)}\n"
    raise UsageError(f"unknown check {check!r}")


def cmd_bench(args) -> int:
    source = bench.load_source(args.graph, args.capacity_policy)
    if args.nodes is not None:
        if isinstance(source, Instance):
            raise UsageError("--nodes applies to graphs, not instance files")
        source = bench.extract_subgraph(source, args.nodes)
    config = bench.ExperimentConfig(
        source, _floats(args.gamma), args.agents, args.trials, args.seed, args.ref, args.rsd,
    )
    rows = bench.run_experiment(config)
    comments = [
        f"graph {args.graph}",
        f"nodes {args.nodes if args.nodes is not None else 'all'}",
        f"capacity_policy {args.capacity_policy}",
        f"seed {args.seed} trials {args.trials} agents {args.agents} ref {args.ref} rsd {args.rsd}",
    ]
    for row in rows:
        if row.infeasible:
            comments.append(f"gamma {fmt_number(row.gamma)} infeasible_trials {row.infeasible}")
            print(f"warning: gamma {fmt_number(row.gamma)}: {row.infeasible} infeasible trial(s) skipped",
                  file=sys.stderr)
    _emit(bench.format_csv(rows, comments), args.out)
    return 0


def cmd_expand_time(args) -> int:
    inst = read_instance(args.instance)
    expanded, tx = expand_instance(inst, args.horizon)
    _with_comments(expanded, f"time-expanded over {tx.horizon} steps",
                   f"movement_edges {len(tx.movement_edges)} holdover_edges {len(tx.holdover_edges)}")
    _emit(dumps(expanded), args.out)
    return 0


def cmd_stats(args) -> int:
    if args.graph.endswith(".tap"):
        net = read_instance(args.graph).network
    else:
        net = _load_network(args.graph, args.capacity_policy)
    if args.nodes is not None:
        net = bench.extract_subgraph(net, args.nodes)
    stats = dict(net.stats())
    stats["strongly_connected"] = str(is_strongly_connected(net)).lower()
    if args.format == "csv":
        text = ",".join(stats) + "\n" + ",".join(_stat(v) for v in stats.values()) + "\n"
    else:
        text = "".join(f"{k} {_stat(v)}\n" for k, v in stats.items())
    _emit(text, args.out)
    return 0


def _stat(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tapmech", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-instance", help="write a generated instance file")
    g.add_argument("kind", choices=["fig1", "sd-tight", "chain", "tap-plus", "yao", "random"])
    g.add_argument("--eps", type=float, default=0.01)
    g.add_argument("--K", type=float, default=None, help="fig1 long-edge length (default min(2, (10-4eps)/eps))")
    g.add_argument("--n", type=int, default=5, help="sd-tight agent count")
    g.add_argument("--k", type=int, default=2, help="chain level count")
    g.add_argument("--orders", help="tap-plus strict orders, best first: '0,1,2;2,1,0'")
    g.add_argument("--all-strict", action="store_true", help="tap-plus: build a destination for every strict order")
    g.add_argument("--variant", type=int, choices=[0, 1], default=0, help="yao: 0 = base, 1 = shifted")
    g.add_argument("--graph", help="random: graph source (.gr, .tap or gen:grid:SIDE)")
    g.add_argument("--agents", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--capacity-policy", default="constant:27")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_instance)

    def mech_flags(sp):
        sp.add_argument("--instance", required=True)
        sp.add_argument("--mech", choices=["sd", "bsd", "rsd", "opt"], default="sd")
        sp.add_argument("--ordering", help="comma-separated agent names")
        sp.add_argument("--seed", type=int, default=0, help="rsd ordering seed")
        sp.add_argument("--x1", help="bsd: comma-separated edge ids of block X1 (rest is X2)")
        sp.add_argument("--bsd-mode", choices=["edge", "path"], default="edge")
        sp.add_argument("--budget", type=int, default=mechanisms.DEFAULT_BUDGET, help="opt search budget")
        sp.add_argument("--format", choices=["text", "csv"], default="text")
        sp.add_argument("--out")

    s = sub.add_parser("solve", help="run a mechanism and print the allocation")
    mech_flags(s)
    s.add_argument("--expected", help="rsd: also report E[SC] via exact or mc:K")
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("audit", help="search for profitable misreports")
    mech_flags(a)
    a.add_argument("--agent", help="audit only this agent")
    a.add_argument("--checks", help="extra checks: non-bossy,best-reaction,pareto,docp")
    a.set_defaults(func=cmd_audit)

    b = sub.add_parser("bench", help="resource-augmentation sweep to CSV")
    b.add_argument("--graph", required=True, help=".gr file, .tap file or gen:NAME[:ARG]")
    b.add_argument("--nodes", type=int, help="keep the first N nodes, bridged by shortcut edges")
    b.add_argument("--agents", type=int, help="agents per trial")
    b.add_argument("--gamma", default=",".join(str(g) for g in bench.DEFAULT_GAMMAS),
                   help="comma-separated capacity augmentation factors")
    b.add_argument("--trials", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--ref", choices=["exact", "proxy"], default="proxy",
                   help="reference cost: certified optimum or the free-flow lower bound")
    b.add_argument("--rsd", default="mc:10", help="RSD estimate: exact or mc:K")
    b.add_argument("--capacity-policy", default="constant:27")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("expand-time", help="write the time-expanded instance")
    t.add_argument("--instance", required=True)
    t.add_argument("--horizon", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_expand_time)

    st = sub.add_parser("stats", help="structural statistics of a graph")
    st.add_argument("--graph", required=True)
    st.add_argument("--nodes", type=int)
    st.add_argument("--capacity-policy", default="constant:27")
    st.add_argument("--format", choices=["text", "csv"], default="text")
    st.add_argument("--out")
    st.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tapmech: error: {exc}", file=sys.stderr)
        return 2
    except NotCertifiedError as exc:
        print(f"tapmech: not certified: {exc}", file=sys.stderr)
        return 1
    except TapError as exc:
        print(f"tapmech: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"tapmech: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"tapmech: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
