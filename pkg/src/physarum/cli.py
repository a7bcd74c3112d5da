"""Command-line surface: solvers, generators, oracles, benchmarks.

Exit codes: 0 success, 2 instance/parse error, 3 solver did not converge
(the report is still written), 4 internal error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import fileio
from .ctap import CtapConfig, cppa_ctap
from .engine import SolverConfig
from .errors import PhysarumError
from .generate import (
    GenSpec,
    grid_on_pipe,
    hearn_network,
    random_directed_connected,
    three_path_fixture,
)
from .graph import Graph, Mode, build_graph, validate_capacity
from .maxflow import cppa_maxflow, default_epsilon, oracle_maxflow
from .mincostflow import cppa_mcmf, oracle_mcmf

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NOT_CONVERGED = 3
EXIT_INTERNAL = 4


def _parse_gen_spec(text: str) -> GenSpec:
    """Parse 'n=50,seed=7,p=0.7[,cmin=1,cmax=10,costmin=1,costmax=10,convention=unordered]'."""
    values: dict[str, str] = {}
    for part in text.split(","):
        if not part:
            continue
        if "=" not in part:
            raise PhysarumError(f"bad --gen entry {part!r}, want key=value")
        key, _, val = part.partition("=")
        values[key.strip()] = val.strip()
    try:
        return GenSpec(
            node_count=int(values["n"]),
            seed=int(values.get("seed", "0")),
            connect_probability=float(values.get("p", "0.7")),
            capacity_range=(int(values.get("cmin", "1")), int(values.get("cmax", "10"))),
            cost_range=(int(values.get("costmin", "1")), int(values.get("costmax", "10"))),
            pair_convention=values.get("convention", "unordered"),
        )
    except KeyError as exc:
        raise PhysarumError(f"--gen is missing {exc}") from exc


def _load_instance(args):
    """Returns (graph, source, sink, instance_descriptor)."""
    if bool(args.input) == bool(args.gen):
        raise PhysarumError("exactly one of --input or --gen is required")
    if args.input:
        text = Path(args.input).read_text()
        inst = fileio.parse_flow_instance(text)
        graph, source, sink = inst.graph, inst.source, inst.sink
        descriptor = {"input": args.input}
    else:
        spec = _parse_gen_spec(args.gen)
        graph, used, retries = random_directed_connected(spec)
        source, sink = 0, graph.node_count - 1
        descriptor = {
            "gen": {
                "n": used.node_count,
                "seed": used.seed,
                "p": used.connect_probability,
                "caps": list(used.capacity_range),
                "costs": list(used.cost_range),
                "convention": used.pair_convention,
                "retries": retries,
            }
        }
    if args.mode is not None and Mode(args.mode) is not graph.mode:
        graph = build_graph(
            graph.node_count,
            [(a.tail, a.head, a.length, a.capacity, a.unit_cost) for a in graph.arcs],
            Mode(args.mode),
            allow_parallel=True,
        )
    return graph, source, sink, descriptor


def _solver_config(args, graph: Graph) -> SolverConfig:
    epsilon = args.epsilon if args.epsilon is not None else default_epsilon(graph.node_count + 1)
    return SolverConfig(
        k=args.k,
        epsilon=epsilon,
        max_iterations=args.max_iters,
    )


def _write_outputs(report: fileio.RunReport, trace, out: str | None) -> None:
    if out is None:
        sys.stdout.write(fileio.write_report(report, "json"))
        return
    out_path = Path(out)
    if trace is not None:
        trace_path = out_path.with_suffix(out_path.suffix + ".trace.csv")
        trace_path.write_text(fileio.write_trace_csv(trace))
        report.trace_file = trace_path.name
    out_path.write_text(fileio.write_report(report, "json"))
    csv_path = out_path.with_suffix(out_path.suffix + ".summary.csv")
    csv_path.write_text(fileio.write_report(report, "csv"))


def _cmd_maxflow(args) -> int:
    graph, source, sink, descriptor = _load_instance(args)
    config = _solver_config(args, graph)
    res = cppa_maxflow(graph, source, sink, config)
    results = {
        "max_flow": res.max_flow,
        "max_flow_rounded": res.max_flow_rounded,
        "virtual_flow": res.virtual_flow,
        "inflow": res.inflow,
        "converged": res.converged,
        "stop_reason": res.run.stop_reason,
    }
    if args.oracle:
        oracle = oracle_maxflow(graph, source, sink)
        results["oracle_max_flow"] = oracle.value
        results["gap"] = abs(res.max_flow - oracle.value)
    report = fileio.RunReport(
        kind="maxflow",
        instance=descriptor,
        config={
            "k": config.k,
            "epsilon": config.epsilon,
            "max_iterations": config.max_iterations,
            "mode": graph.mode.value,
        },
        results=results,
        iterations=res.iterations,
        wall_time_seconds=res.run.wall_time,
        violations=fileio.violations_summary(validate_capacity(graph, res.flows, rel_tol=1e-9)),
    )
    _write_outputs(report, res.run.trace, args.out)
    print(f"max flow {res.max_flow:.6f}"
          + (f" (rounded {res.max_flow_rounded})" if res.max_flow_rounded is not None else "")
          + f" in {res.iterations} iterations", file=sys.stderr)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_mcmf(args) -> int:
    graph, source, sink, descriptor = _load_instance(args)
    oracle = oracle_mcmf(graph, source, sink) if args.oracle else None

    def run_once(epsilon: float):
        config = SolverConfig(k=args.k, epsilon=epsilon, max_iterations=args.max_iters)
        res = cppa_mcmf(graph, source, sink, config)
        row = {
            "epsilon": epsilon,
            "max_flow": res.max_flow,
            "max_flow_rounded": res.max_flow_rounded,
            "min_cost": res.min_cost,
            "phase1_iterations": res.phase1_iterations,
            "phase2_iterations": res.phase2_iterations,
            "converged": res.converged,
        }
        if oracle is not None:
            row["oracle_max_flow"] = oracle.max_flow
            row["oracle_min_cost"] = oracle.min_cost
            row["gap"] = abs(res.max_flow - oracle.max_flow)
            row["min_cost_error"] = abs(res.min_cost - oracle.min_cost)
        return res, row

    epsilon = args.epsilon if args.epsilon is not None else default_epsilon(graph.node_count + 1)
    if args.epsilon_sweep:
        sweep = [float(tok) for tok in args.epsilon_sweep.split(",") if tok]
        rows = []
        wall = 0.0
        iterations = 0
        converged = True
        for eps in sweep:
            res, row = run_once(eps)
            wall += res.phase1.run.wall_time + (res.phase2.wall_time if res.phase2 else 0.0)
            iterations += res.phase1_iterations + res.phase2_iterations
            converged = converged and res.converged
            rows.append(row)
        results = {"sweep": rows}
        trace = None
        last = None
    else:
        last, row = run_once(epsilon)
        results = row
        wall = last.phase1.run.wall_time + (last.phase2.wall_time if last.phase2 else 0.0)
        iterations = last.phase1_iterations + last.phase2_iterations
        converged = last.converged
        trace = last.phase2.trace if last.phase2 is not None else last.phase1.run.trace

    report = fileio.RunReport(
        kind="mcmf",
        instance=descriptor,
        config={
            "k": args.k,
            "epsilon": epsilon if not args.epsilon_sweep else None,
            "epsilon_sweep": args.epsilon_sweep,
            "max_iterations": args.max_iters,
            "mode": graph.mode.value,
        },
        results=results,
        iterations=iterations,
        wall_time_seconds=wall,
        violations=fileio.violations_summary(
            validate_capacity(graph, last.flows, rel_tol=1e-9)
        ) if last is not None else {},
    )
    _write_outputs(report, trace, args.out)
    if last is not None:
        print(f"max flow {last.max_flow:.6f}, min cost {last.min_cost:.6f}", file=sys.stderr)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _cmd_ctap(args) -> int:
    network, demands = fileio.parse_traffic_instance(
        Path(args.network).read_text(), Path(args.demands).read_text()
    )
    config = CtapConfig(
        k=args.k,
        rgap_target=args.rgap_target,
        max_iterations=args.max_iters,
        capacitated=not args.uncapacitated,
    )
    res = cppa_ctap(network, demands, config)
    links = []
    for a in network.graph.arcs:
        links.append(
            {
                "link": a.id + 1,
                "tail": a.tail + 1,
                "head": a.head + 1,
                "capacity": a.capacity,
                "flow": float(res.flows[a.id]),
                "time": float(res.times[a.id]),
                "rel_excess": float(max(0.0, abs(res.flows[a.id]) / a.capacity - 1.0)),
            }
        )
    report = fileio.RunReport(
        kind="ctap",
        instance={"network": args.network, "demands": args.demands},
        config={
            "k": config.k,
            "rgap_target": config.rgap_target,
            "max_iterations": config.max_iterations,
            "capacitated": config.capacitated,
        },
        results={
            "rgap": res.rgap,
            "converged": res.converged,
            "stop_reason": res.stop_reason,
            "total_demand": float(sum(d.demand for d in demands)),
            "links": links,
        },
        iterations=res.iterations,
        wall_time_seconds=res.wall_time,
        violations=fileio.violations_summary(res.violations),
    )
    _write_outputs(report, res.trace, args.out)
    print(
        f"rgap {res.rgap:.6g} after {res.iterations} iterations "
        f"({res.stop_reason}); max rel excess {res.violations.max_rel_excess:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_gen(args) -> int:
    out = Path(args.out)
    if args.kind == "random":
        spec = GenSpec(
            node_count=args.n,
            seed=args.seed,
            connect_probability=args.p,
            capacity_range=tuple(int(x) for x in args.caps.split(",")),
            cost_range=tuple(int(x) for x in args.costs.split(",")),
            pair_convention=args.convention,
        )
        graph, used, retries = random_directed_connected(spec)
        out.write_text(fileio.write_flow_instance(graph, 0, graph.node_count - 1))
        print(f"wrote {out} (seed used {used.seed}, retries {retries})", file=sys.stderr)
    elif args.kind == "grid":
        graph = grid_on_pipe(args.width, args.depth, args.seed,
                             cap_range=tuple(int(x) for x in args.caps.split(",")))
        out.write_text(fileio.write_flow_instance(graph, 0, graph.node_count - 1))
        print(f"wrote {out}", file=sys.stderr)
    elif args.kind == "threepath":
        fx = three_path_fixture()
        out.write_text(fileio.write_flow_instance(fx.graph, fx.source, fx.sink))
        print(f"wrote {out}; inflow schedule {fx.schedule}", file=sys.stderr)
    elif args.kind == "hearn":
        network, demands = hearn_network()
        net_text, dem_text = fileio.write_traffic_instance(network, demands)
        out.write_text(net_text)
        dem_path = Path(str(out) + ".demands")
        dem_path.write_text(dem_text)
        print(f"wrote {out} and {dem_path}", file=sys.stderr)
    else:
        raise PhysarumError(f"unknown kind {args.kind!r}")
    return EXIT_OK


def _bench_flow(args, out_dir: Path, suite: str) -> dict:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    rows = []
    for idx, n in enumerate(sizes):
        spec = GenSpec(node_count=n, seed=args.seed + idx)
        graph, used, retries = random_directed_connected(spec)
        inst_path = out_dir / f"{suite}_n{n}_seed{used.seed}.dimacs"
        inst_path.write_text(fileio.write_flow_instance(graph, 0, n - 1))
        config = SolverConfig(epsilon=default_epsilon(n + 1), max_iterations=args.max_iters)
        times = []
        result = None
        for _ in range(args.repeats):
            if suite == "mf":
                result = cppa_maxflow(graph, 0, n - 1, config)
                times.append(result.run.wall_time)
            else:
                result = cppa_mcmf(graph, 0, n - 1, config)
                times.append(
                    result.phase1.run.wall_time
                    + (result.phase2.wall_time if result.phase2 else 0.0)
                )
        if suite == "mf":
            oracle_value = oracle_maxflow(graph, 0, n - 1).value
            gap = abs(result.max_flow - oracle_value)
            answer = {"max_flow": result.max_flow, "oracle": oracle_value, "gap": gap}
        else:
            oracle = oracle_mcmf(graph, 0, n - 1)
            answer = {
                "max_flow": result.max_flow,
                "min_cost": result.min_cost,
                "oracle_max_flow": oracle.max_flow,
                "oracle_min_cost": oracle.min_cost,
                "gap": abs(result.max_flow - oracle.max_flow),
                "min_cost_error": abs(result.min_cost - oracle.min_cost),
            }
        rows.append(
            {
                "size": n,
                "seed": used.seed,
                "retries": retries,
                "instance": inst_path.name,
                "repeats": args.repeats,
                "mean_time": float(np.mean(times)),
                "min_time": float(np.min(times)),
                "max_time": float(np.max(times)),
                "converged": result.converged,
                **answer,
            }
        )
    return {"suite": suite, "rows": rows}


def _bench_ctap(args, out_dir: Path) -> dict:
    network, demands = hearn_network()
    net_text, dem_text = fileio.write_traffic_instance(network, demands)
    (out_dir / "ctap_hearn.net").write_text(net_text)
    (out_dir / "ctap_hearn.net.demands").write_text(dem_text)
    rows = []
    for capacitated in (True, False):
        times = []
        result = None
        for _ in range(args.repeats):
            result = cppa_ctap(
                network, demands,
                CtapConfig(capacitated=capacitated, max_iterations=args.max_iters),
            )
            times.append(result.wall_time)
        rows.append(
            {
                "network": "hearn",
                "capacitated": capacitated,
                "repeats": args.repeats,
                "mean_time": float(np.mean(times)),
                "rgap": result.rgap,
                "iterations": result.iterations,
                "converged": result.converged,
                "max_rel_excess": result.violations.max_rel_excess,
            }
        )
    return {"suite": "ctap", "rows": rows}


def _cmd_bench(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    if args.suite in ("mf", "mcmf"):
        summary = _bench_flow(args, out_dir, args.suite)
    else:
        summary = _bench_ctap(args, out_dir)
    summary["total_wall_time"] = time.perf_counter() - started
    (out_dir / "summary.json").write_text(fileio.dumps(summary))
    lines = ["suite,size,mean_time,gap_or_rgap,converged"]
    for row in summary["rows"]:
        gap = row.get("gap", row.get("rgap", ""))
        lines.append(
            f"{summary['suite']},{row.get('size', row.get('network'))},"
            f"{fileio.format_float(row['mean_time'], 6)},{gap},{row['converged']}"
        )
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")
    print(f"bench summary written to {out_dir}/summary.json", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physarum",
        description="Capacity-constrained Physarum solver for flow problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_flow_args(p):
        p.add_argument("--input", help="DIMACS-style instance file")
        p.add_argument("--gen", help="inline generator spec: n=..,seed=..,p=..")
        p.add_argument("--k", type=float, default=0.85)
        p.add_argument("--epsilon", type=float, default=None,
                       help="stopping tolerance (default 5e-5, 1e-4 above 400 nodes)")
        p.add_argument("--max-iters", type=int, default=100_000)
        p.add_argument("--mode", choices=["directed", "undirected"], default=None)
        p.add_argument("--oracle", action="store_true",
                       help="also run the exact oracle and report the gap")
        p.add_argument("--out", help="write the JSON report here (plus .trace.csv)")

    p_mf = sub.add_parser("maxflow", help="max flow via the capacitated solver")
    add_flow_args(p_mf)
    p_mf.set_defaults(func=_cmd_maxflow)

    p_mcmf = sub.add_parser("mcmf", help="min-cost max flow (two-phase)")
    add_flow_args(p_mcmf)
    p_mcmf.add_argument("--epsilon-sweep", help="comma list of tolerances to sweep")
    p_mcmf.set_defaults(func=_cmd_mcmf)

    p_ctap = sub.add_parser("ctap", help="capacitated traffic assignment")
    p_ctap.add_argument("--network", required=True)
    p_ctap.add_argument("--demands", required=True)
    p_ctap.add_argument("--k", type=float, default=0.85)
    p_ctap.add_argument("--rgap-target", type=float, default=1e-4)
    p_ctap.add_argument("--max-iters", type=int, default=50_000)
    p_ctap.add_argument("--uncapacitated", action="store_true",
                        help="plain averaging adaptation (no capacity control)")
    p_ctap.add_argument("--out")
    p_ctap.set_defaults(func=_cmd_ctap)

    p_gen = sub.add_parser("gen", help="write instance files")
    p_gen.add_argument("--kind", required=True,
                       choices=["random", "grid", "hearn", "threepath"])
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n", type=int, default=100)
    p_gen.add_argument("--p", type=float, default=0.7)
    p_gen.add_argument("--caps", default="1,10")
    p_gen.add_argument("--costs", default="1,10")
    p_gen.add_argument("--convention", choices=["unordered", "ordered"], default="unordered")
    p_gen.add_argument("--width", type=int, default=3)
    p_gen.add_argument("--depth", type=int, default=3)
    p_gen.set_defaults(func=_cmd_gen)

    p_bench = sub.add_parser("bench", help="seeded benchmark suites with oracles")
    p_bench.add_argument("--suite", required=True, choices=["mf", "mcmf", "ctap"])
    p_bench.add_argument("--sizes", default="20,40,60")
    p_bench.add_argument("--repeats", type=int, default=10)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--max-iters", type=int, default=100_000)
    p_bench.add_argument("--out", required=True)
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PhysarumError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
