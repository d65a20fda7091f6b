"""Bundled external MILP solver command.

Reads an LP file, solves it with HiGHS (through scipy.optimize.milp), and
writes a name-value solution file::

    status optimal
    objective 120
    ja_0 1
    ...

Used as the default solver command by this package; any LP-file solver can
replace it via JOINOPT_SOLVER_CMD. Run as::

    python -m joinopt.highs_cli model.lp solution.txt --time-limit 60
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .milp_solver import parse_lp


def solve_lp_text(text: str, time_limit: float | None, mip_gap: float = 0.0):
    """Solve LP text; returns (status, objective, {name: value})."""
    lp = parse_lp(text)
    names = lp.variable_names()
    idx = {n: i for i, n in enumerate(names)}
    n = len(names)

    c = np.zeros(n)
    for name, coef in lp.objective:
        c[idx[name]] += coef

    lb = np.zeros(n)
    ub = np.ones(n)
    for name in lp.generals:
        lo, hi = lp.bounds.get(name, (0.0, np.inf))
        lb[idx[name]], ub[idx[name]] = lo, hi
    for name, (lo, hi) in lp.bounds.items():
        lb[idx[name]], ub[idx[name]] = lo, hi

    rows = len(lp.rows)
    a = np.zeros((rows, n))
    row_lb = np.full(rows, -np.inf)
    row_ub = np.full(rows, np.inf)
    for k, (_, coeffs, sense, rhs) in enumerate(lp.rows):
        for name, coef in coeffs:
            a[k, idx[name]] += coef
        if sense in ("<=", "="):
            row_ub[k] = rhs
        if sense in (">=", "="):
            row_lb[k] = rhs

    options = {"mip_rel_gap": mip_gap}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = milp(
        c,
        constraints=[LinearConstraint(a, row_lb, row_ub)] if rows else [],
        integrality=np.ones(n),
        bounds=Bounds(lb, ub),
        options=options,
    )

    if res.status == 0:
        status = "optimal"
    elif res.status == 1:
        status = "feasible" if res.x is not None else "timeout"
    elif res.status == 2:
        status = "infeasible"
    else:
        status = "error"

    values = {}
    objective = None
    if res.x is not None:
        values = {name: float(res.x[idx[name]]) for name in names}
        objective = float(res.fun)
    return status, objective, values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("model", help="input LP file")
    parser.add_argument("solution", help="output solution file (name-value format)")
    parser.add_argument("--time-limit", type=float, default=None, help="seconds")
    parser.add_argument("--gap", type=float, default=0.0, help="relative MIP gap")
    args = parser.parse_args(argv)

    with open(args.model) as fh:
        text = fh.read()
    status, objective, values = solve_lp_text(text, args.time_limit, args.gap)

    lines = [f"status {status}"]
    if objective is not None:
        lines.append(f"objective {objective:.17g}")
    for name, value in values.items():
        lines.append(f"{name} {value:.17g}")
    with open(args.solution, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
