"""Command-line interface.

Subcommands::

    joinopt generate    --n 20 --count 5 --seed 1 --out queries/
    joinopt optimize    --graph q.graph --algo hybrid-milp --depths 4,5 --timeout 60s
    joinopt bench       --queries queries/ --algos adaptive,goo --timeout 60s --out report.csv
    joinopt summarize   --report report.csv --cap 20
    joinopt convergence --graph q.graph --interval 10s --depth 4
    joinopt plot        --report report.csv --out chart.png
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import hybrid as hybrid_mod
from .core import tree_to_string
from .milp_solver import default_solver_config
from .queryio import GeneratorParams, generate_tree_query, read_graph, write_graph

GRAPH_SUFFIX = ".graph"


def parse_duration(text: str) -> float:
    """'60s', '500ms', or plain seconds."""
    t = text.strip().lower()
    if t.endswith("ms"):
        return float(t[:-2]) / 1000.0
    if t.endswith("s"):
        return float(t[:-1])
    return float(t)


def _cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = int(np.random.SeedSequence(entropy=(args.seed, i)).generate_state(1)[0])
        graph = generate_tree_query(GeneratorParams(args.n, seed=seed))
        path = out / f"q{args.n:03d}_{i:03d}{GRAPH_SUFFIX}"
        path.write_text(write_graph(graph))
        print(path)
    return 0


def _load_queries(directory: str):
    paths = sorted(Path(directory).glob(f"*{GRAPH_SUFFIX}"))
    if not paths:
        raise SystemExit(f"no {GRAPH_SUFFIX} files found in {directory}")
    return [(p.stem, read_graph(p.read_text())) for p in paths]


def _cmd_optimize(args) -> int:
    graph = read_graph(Path(args.graph).read_text())
    timeout = parse_duration(args.timeout)
    config = default_solver_config(time_limit=timeout)
    if args.algo == "hybrid-milp":
        depths = tuple(int(d) for d in args.depths.split(","))
        result = hybrid_mod.hybrid_milp(graph, depths=depths, config=config)
    elif args.algo in bench_mod.ALGORITHMS:
        import time

        deadline = time.monotonic() + timeout
        result = bench_mod.ALGORITHMS[args.algo](graph, args.seed, deadline, config)
    else:
        raise SystemExit(f"unknown algorithm {args.algo!r}; known: {sorted(bench_mod.ALGORITHMS)}")
    print(f"algorithm: {result.algorithm}")
    print(f"status:    {result.status}")
    if result.status == "ok":
        print(f"cost:      {result.cost!r}")
        print(f"tree:      {tree_to_string(result.tree, graph)}")
    print(f"time:      {result.wall_time * 1000:.1f} ms")
    for key, value in sorted(result.meta.items()):
        print(f"meta.{key}: {value}")
    return 0 if result.status == "ok" else 1


def _cmd_bench(args) -> int:
    queries = _load_queries(args.queries)
    algorithms = [a.strip() for a in args.algos.split(",") if a.strip()]
    timeout = parse_duration(args.timeout)
    report = bench_mod.run_benchmark(
        queries, algorithms, timeout=timeout, base_seed=args.seed, workers=args.workers
    )
    text = bench_mod.report_to_csv(report)
    Path(args.out).write_text(text)
    ok = sum(1 for r in report.rows if r.status == "ok")
    print(f"{len(report.rows)} rows ({ok} ok) -> {args.out}")
    return 0


def _cmd_summarize(args) -> int:
    report = bench_mod.report_from_csv(Path(args.report).read_text())
    buckets = bench_mod.summarize(report, cap=args.cap)
    print(bench_mod.format_summary(buckets))
    return 0


def _cmd_convergence(args) -> int:
    graph = read_graph(Path(args.graph).read_text())
    config = default_solver_config(time_limit=parse_duration(args.timeout))
    series = bench_mod.measure_convergence(
        graph, config, interval=parse_duration(args.interval), depth=args.depth
    )
    if not series.samples:
        print("no incumbents observed")
        return 1
    for t, obj in series.samples:
        print(f"{t:8.1f}s  {obj!r}")
    print(f"final objective:  {series.final_objective!r}")
    print(f"convergence time: {series.convergence_time:.1f}s (within 20% of final)")
    return 0


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = bench_mod.report_from_csv(Path(args.report).read_text())
    buckets = bench_mod.summarize(report, cap=args.cap)
    algos = sorted({b.algorithm for b in buckets})
    sizes = sorted({b.n_relations for b in buckets})
    fig, ax = plt.subplots(figsize=(1.5 + 1.6 * len(sizes), 4.5))
    width = 0.8 / max(1, len(algos))
    for ai, algo in enumerate(algos):
        xs, mins, means, maxs, nas = [], [], [], [], []
        for si, size in enumerate(sizes):
            b = next((b for b in buckets if b.algorithm == algo and b.n_relations == size), None)
            if b is None:
                continue
            x = si + ai * width - 0.4 + width / 2
            if b.mean_norm is not None:
                xs.append(x)
                mins.append(b.min_norm)
                means.append(b.mean_norm)
                maxs.append(b.max_norm)
            if b.n_a_count:
                nas.append((x, b.n_a_count))
        if xs:
            ax.vlines(xs, mins, maxs, color=f"C{ai}", lw=2)
            ax.plot(xs, means, "o", color=f"C{ai}", label=algo, ms=5)
        for x, count in nas:
            ax.plot([x], [args.cap], "x", color=f"C{ai}", ms=7)
            ax.annotate(str(count), (x, args.cap), textcoords="offset points", xytext=(0, 4), fontsize=7)
    ax.set_xticks(range(len(sizes)))
    ax.set_xticklabels([str(s) for s in sizes])
    ax.set_xlabel("relations joined")
    ax.set_ylabel("normalized cost (min/mean/max)")
    ax.set_ylim(bottom=0.9)
    ax.set_yscale("log")
    ax.axhline(args.cap, color="gray", lw=0.8, ls="--")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="joinopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate random tree queries")
    p.add_argument("--n", type=int, required=True, help="relations per query")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("optimize", help="run one algorithm on one query graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--algo", required=True)
    p.add_argument("--depths", default="4,5,6,7", help="hybrid-milp template depths")
    p.add_argument("--timeout", default="60s")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("bench", help="benchmark algorithms over a query directory")
    p.add_argument("--queries", required=True)
    p.add_argument("--algos", required=True, help="comma-separated labels")
    p.add_argument("--timeout", default="60s")
    p.add_argument("--out", default="report.csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("summarize", help="summary table from a bench CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--cap", type=float, default=20.0)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("convergence", help="sample MILP incumbent quality over time")
    p.add_argument("--graph", required=True)
    p.add_argument("--interval", default="10s")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--timeout", default="60s")
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("plot", help="chart normalized costs from a bench CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default="chart.png")
    p.add_argument("--cap", type=float, default=20.0)
    p.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
