"""Benchmark harness: per-algorithm timeouts, normalized costs, CSV reports,
summary tables, and solver convergence sampling.

Timeout discipline: in-process algorithms take cooperative deadlines (they
poll a monotonic timestamp inside their hot loops); external MILP solves get
hard per-process limits. Timeout rows are stored with no cost; capping to an
upper bound happens only at summary/plot time, never in stored data.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import exact, heuristics, hybrid
from .core import InvalidArgumentError, PlanResult, QueryGraph
from .milp_model import build_template, derive_thresholds, encode
from .milp_solver import SolverConfig, default_solver_config, solve_external

logger = logging.getLogger(__name__)


def _run_ikkbz(graph, seed, deadline, config):
    return heuristics.ikkbz(graph)[1]


def _run_hybrid(graph, seed, deadline, config):
    return hybrid.hybrid_milp(graph, config=config)


ALGORITHMS: dict[str, Callable] = {
    "brute-force": lambda g, seed, deadline, config: exact.brute_force_optimal(g, True, deadline),
    "dpsize": lambda g, seed, deadline, config: exact.dpsize(g, deadline),
    "ikkbz": _run_ikkbz,
    "adaptive": lambda g, seed, deadline, config: heuristics.adaptive(g),
    "goo": lambda g, seed, deadline, config: heuristics.goo(g),
    "goo-dp": lambda g, seed, deadline, config: heuristics.goo_dp(g),
    "minsel": lambda g, seed, deadline, config: heuristics.minsel(g),
    "quickpick": lambda g, seed, deadline, config: heuristics.quickpick(
        g, seed=seed, deadline=deadline
    ),
    "genetic": lambda g, seed, deadline, config: heuristics.genetic(
        g, seed=seed, deadline=deadline
    ),
    "hybrid-milp": _run_hybrid,
}


@dataclass(frozen=True)
class BenchRow:
    query_id: str
    n_relations: int
    algorithm: str
    status: str
    cost: Optional[float]
    normalized_cost: Optional[float]
    wall_time_ms: float


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    best_cost: dict[str, float]


def _derive_seed(base_seed: int, query_idx: int, algo_idx: int) -> int:
    ss = np.random.SeedSequence(entropy=(base_seed, query_idx, algo_idx))
    return int(ss.generate_state(1)[0])


def run_benchmark(
    queries: Sequence[tuple[str, QueryGraph]],
    algorithms: Sequence[str],
    timeout: float = 60.0,
    base_seed: int = 0,
    solver_config: Optional[SolverConfig] = None,
    workers: int = 1,
) -> BenchReport:
    """Run every (query, algorithm) pair under the timeout.

    Returns rows in (query, algorithm) submission order regardless of worker
    scheduling. Unknown algorithm labels fail before anything runs.
    """
    if not queries or not algorithms:
        raise InvalidArgumentError("queries and algorithms must be nonempty")
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        raise InvalidArgumentError(
            f"unknown algorithms {unknown}; known: {sorted(ALGORITHMS)}"
        )

    def one(query_idx: int, algo_idx: int) -> tuple:
        qid, graph = queries[query_idx]
        label = algorithms[algo_idx]
        seed = _derive_seed(base_seed, query_idx, algo_idx)
        deadline = time.monotonic() + timeout
        config = solver_config or default_solver_config(time_limit=timeout)
        t0 = time.monotonic()
        try:
            result = ALGORITHMS[label](graph, seed, deadline, config)
        except TimeoutError:
            result = PlanResult(label, None, None, time.monotonic() - t0, "timeout")
        except Exception as exc:  # noqa: BLE001 - a failing algorithm is a row, not a crash
            logger.warning("%s on %s raised: %s", label, qid, exc)
            result = PlanResult(label, None, None, time.monotonic() - t0, "error")
        wall_ms = (time.monotonic() - t0) * 1000.0
        return qid, graph.n_relations, label, result, wall_ms

    jobs = [(qi, ai) for qi in range(len(queries)) for ai in range(len(algorithms))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda job: one(*job), jobs))
    else:
        outcomes = [one(*job) for job in jobs]

    best: dict[str, float] = {}
    for qid, _, _, result, _ in outcomes:
        if result.status == "ok":
            best[qid] = min(best.get(qid, float("inf")), result.cost)

    rows = []
    for qid, n_rel, label, result, wall_ms in outcomes:
        cost = result.cost if result.status == "ok" else None
        norm = None
        if cost is not None and qid in best:
            norm = cost / best[qid] if best[qid] > 0 else 1.0
        rows.append(BenchRow(qid, n_rel, label, result.status, cost, norm, wall_ms))
    return BenchReport(tuple(rows), best)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "query_id",
    "n_relations",
    "algorithm",
    "status",
    "cost",
    "normalized_cost",
    "wall_time_ms",
)


def report_to_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in report.rows:
        writer.writerow(
            [
                r.query_id,
                r.n_relations,
                r.algorithm,
                r.status,
                "" if r.cost is None else repr(r.cost),
                "" if r.normalized_cost is None else repr(r.normalized_cost),
                f"{r.wall_time_ms:.3f}",
            ]
        )
    return buf.getvalue()


def report_from_csv(text: str) -> BenchReport:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise InvalidArgumentError(f"unexpected CSV header {header}")
    rows = []
    best: dict[str, float] = {}
    for rec in reader:
        if not rec:
            continue
        cost = float(rec[4]) if rec[4] else None
        norm = float(rec[5]) if rec[5] else None
        rows.append(
            BenchRow(rec[0], int(rec[1]), rec[2], rec[3], cost, norm, float(rec[6]))
        )
        if cost is not None:
            best[rec[0]] = min(best.get(rec[0], float("inf")), cost)
    return BenchReport(tuple(rows), best)


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryBucket:
    """Normalized-cost statistics for one algorithm at one query size."""

    algorithm: str
    n_relations: int
    runs: int
    min_norm: Optional[float]
    mean_norm: Optional[float]
    max_norm: Optional[float]
    n_a_count: int  # timeouts/errors plus rows at or above the cap


def summarize(report: BenchReport, cap: float = 20.0) -> list[SummaryBucket]:
    """Per algorithm and query-size bucket: min/mean/max normalized cost.

    Rows with normalized cost >= cap count as N/A and stay out of the
    statistics, as do rows without a result.
    """
    if cap <= 1:
        raise InvalidArgumentError("cap must be > 1")
    if not report.rows:
        raise InvalidArgumentError("empty report")
    buckets: dict[tuple[str, int], list[BenchRow]] = {}
    for row in report.rows:
        buckets.setdefault((row.algorithm, row.n_relations), []).append(row)
    out = []
    for (algo, n_rel), rows in sorted(buckets.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        good = [r.normalized_cost for r in rows if r.status == "ok" and r.normalized_cost is not None and r.normalized_cost < cap]
        n_a = len(rows) - len(good)
        out.append(
            SummaryBucket(
                algo,
                n_rel,
                len(rows),
                min(good) if good else None,
                sum(good) / len(good) if good else None,
                max(good) if good else None,
                n_a,
            )
        )
    return out


def format_summary(buckets: list[SummaryBucket]) -> str:
    lines = [
        f"{'R':>4} {'algorithm':<14} {'runs':>5} {'min':>9} {'mean':>9} {'max':>9} {'N/A':>4}"
    ]
    for b in buckets:
        fmt = lambda v: "-" if v is None else f"{v:9.3f}"
        lines.append(
            f"{b.n_relations:>4} {b.algorithm:<14} {b.runs:>5} "
            f"{fmt(b.min_norm):>9} {fmt(b.mean_norm):>9} {fmt(b.max_norm):>9} {b.n_a_count:>4}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Convergence sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceSeries:
    """Incumbent objective sampled at interval boundaries (best-so-far)."""

    samples: tuple[tuple[float, float], ...]
    final_objective: Optional[float]
    convergence_time: Optional[float]  # first sample within 1.2x of the final


def measure_convergence(
    graph: QueryGraph,
    config: SolverConfig,
    interval: float = 10.0,
    depth: int = 4,
    factor: float = 1.2,
) -> ConvergenceSeries:
    """Sample the solver's incumbent objective at interval boundaries.

    The model is solved repeatedly with budgets of 1, 2, ... intervals (up to
    the config time limit or until proven optimal); each sample records the
    best objective seen so far. The reported convergence time is the first
    sample whose objective is within `factor` of the final one, an upper
    bound at interval granularity.
    """
    if interval <= 0:
        raise InvalidArgumentError("interval must be positive")
    ref = heuristics.adaptive(graph)
    if ref.status != "ok":
        raise InvalidArgumentError(f"adaptive failed with status {ref.status}")
    thresholds = derive_thresholds(ref.cost, 5)
    template = build_template(depth, "two_half_anchors", max(0, graph.n_relations - 2 * depth))
    model = encode(graph, template, thresholds)

    samples: list[tuple[float, float]] = []
    best = float("inf")
    k = 0
    while True:
        k += 1
        budget = min(k * interval, config.time_limit)
        step_config = dataclasses.replace(config, time_limit=budget)
        assignment = solve_external(model, step_config)
        if assignment.has_solution:
            best = min(best, assignment.objective)
            samples.append((k * interval, best))
        if assignment.status == "optimal":
            break
        if budget >= config.time_limit:
            break
    if not samples:
        return ConvergenceSeries((), None, None)
    final = samples[-1][1]
    conv_time = next(t for t, obj in samples if obj <= factor * final)
    return ConvergenceSeries(tuple(samples), final, conv_time)
