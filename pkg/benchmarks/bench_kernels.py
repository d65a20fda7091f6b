#!/usr/bin/env python3
"""Benchmark the compiled DP kernels against the pure-Python fallback.

Both implementations share semantics bit for bit; this script reports how
much the compiled extension buys on the subset-DP optimum search and the
size-driven connected-subgraph DP::

    python3 benchmarks/bench_kernels.py [--sizes 10,12,14] [--repeats 3]
"""

import argparse
import time

from joinopt import _kernels_py
from joinopt.queryio import GeneratorParams, generate_tree_query

try:
    from joinopt import _kernels_cy
except ImportError:
    _kernels_cy = None


def arrays(graph):
    return (
        [r.cardinality for r in graph.relations],
        [p.rel_a for p in graph.predicates],
        [p.rel_b for p in graph.predicates],
        [p.selectivity for p in graph.predicates],
    )


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="10,12,14")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    if _kernels_cy is None:
        print("compiled kernels not built (pip install -e . --no-build-isolation); "
              "timing the pure fallback only")

    sizes = [int(s) for s in args.sizes.split(",")]
    header = f"{'kernel':<22} {'R':>3} {'pure [s]':>10} {'compiled [s]':>13} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        g = generate_tree_query(GeneratorParams(n, seed=args.seed))
        cards, pu, pv, ps = arrays(g)
        for label, pure_fn, cy_fn in (
            (
                "subset_dp (cross)",
                lambda: _kernels_py.subset_dp(cards, pu, pv, ps, True),
                (lambda: _kernels_cy.subset_dp(cards, pu, pv, ps, True)) if _kernels_cy else None,
            ),
            (
                "subset_dp (no cross)",
                lambda: _kernels_py.subset_dp(cards, pu, pv, ps, False),
                (lambda: _kernels_cy.subset_dp(cards, pu, pv, ps, False)) if _kernels_cy else None,
            ),
            (
                "dpsize",
                lambda: _kernels_py.dpsize(cards, pu, pv, ps),
                (lambda: _kernels_cy.dpsize(cards, pu, pv, ps)) if _kernels_cy else None,
            ),
        ):
            t_pure = best_time(pure_fn, args.repeats)
            if cy_fn is not None:
                t_cy = best_time(cy_fn, args.repeats)
                print(f"{label:<22} {n:>3} {t_pure:>10.4f} {t_cy:>13.4f} {t_pure / t_cy:>7.1f}x")
            else:
                print(f"{label:<22} {n:>3} {t_pure:>10.4f} {'-':>13} {'-':>8}")


if __name__ == "__main__":
    main()
