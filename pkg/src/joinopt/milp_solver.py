"""Solver-neutral model serialization and solving.

Three pieces:

* LP-format emission (`emit_lp`) and parsing (`parse_lp`) for the subset
  Minimize / Subject To / Bounds / Binary / General / End.
* External solver orchestration (`solve_external`): write the LP file, run a
  configured command with a time limit, parse the solution file in one of
  three dialects, and re-verify the returned integers against every
  constraint before trusting them.
* A deterministic exhaustive reference solver (`solve_reference`,
  `enumerate_assignments`) for small models: depth-first search with bounds
  propagation and objective pruning, used as the oracle in tests.

The default external command runs the bundled HiGHS-backed CLI
(`python -m joinopt.highs_cli`); set JOINOPT_SOLVER_CMD to plug in any other
LP-file solver.
"""

from __future__ import annotations

import logging
import math
import os
import shlex
import subprocess
import sys
import tempfile
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .core import InvalidArgumentError
from .milp_model import Constraint, MilpModel, check_assignment

logger = logging.getLogger(__name__)

SOLVER_CMD_ENV = "JOINOPT_SOLVER_CMD"

_DIALECTS = ("name-value", "cbc-style", "highs-style")


@dataclass(frozen=True)
class SolverConfig:
    """How to invoke an external MILP solver.

    command_template must contain {model} and {solution} placeholders; a
    {time_limit} placeholder (seconds) is substituted when present.
    """

    command_template: str
    solution_dialect: str = "name-value"
    time_limit: float = 60.0
    work_dir: Path = field(default_factory=lambda: Path(tempfile.gettempdir()) / "joinopt")

    def __post_init__(self):
        if "{model}" not in self.command_template or "{solution}" not in self.command_template:
            raise InvalidArgumentError(
                "command_template needs {model} and {solution} placeholders"
            )
        if self.solution_dialect not in _DIALECTS:
            raise InvalidArgumentError(f"unknown solution dialect {self.solution_dialect!r}")
        if self.time_limit <= 0:
            raise InvalidArgumentError("time_limit must be positive")


def default_solver_config(time_limit: float = 60.0, work_dir: Optional[Path] = None) -> SolverConfig:
    """Bundled HiGHS CLI, unless JOINOPT_SOLVER_CMD overrides the command."""
    cmd = os.environ.get(SOLVER_CMD_ENV)
    if not cmd:
        cmd = (
            f"{sys.executable} -m joinopt.highs_cli {{model}} {{solution}} "
            f"--time-limit {{time_limit}}"
        )
    kwargs = {"work_dir": work_dir} if work_dir is not None else {}
    return SolverConfig(cmd, "name-value", time_limit, **kwargs)


@dataclass(frozen=True)
class Assignment:
    """Solver outcome: variable values plus status and objective."""

    values: dict[str, float]
    status: str  # optimal | feasible | infeasible | timeout | error
    objective: Optional[float] = None
    detail: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in ("optimal", "feasible")


# ---------------------------------------------------------------------------
# LP format
# ---------------------------------------------------------------------------


def _num(x: float) -> str:
    return f"{x:.17g}"


def emit_lp(model: MilpModel) -> str:
    """Serialize a model to LP format (deterministic, declaration order)."""
    out = ["Minimize"]
    out.append(" obj: " + _terms(model.objective, model))
    out.append("Subject To")
    for con in model.constraints:
        out.append(
            f" {con.name}: {_terms(con.coefficients, model)} {con.sense} {_num(con.rhs)}"
        )
    bounds = [
        f" {v.bounds[0]} <= {v.name} <= {v.bounds[1]}"
        for v in model.variables
        if v.kind == "integer"
    ]
    if bounds:
        out.append("Bounds")
        out.extend(bounds)
    binaries = [v.name for v in model.variables if v.kind == "binary"]
    if binaries:
        out.append("Binary")
        out.extend(" " + n for n in binaries)
    generals = [v.name for v in model.variables if v.kind == "integer"]
    if generals:
        out.append("General")
        out.extend(" " + n for n in generals)
    out.append("End")
    return "\n".join(out) + "\n"


def _terms(coeffs, model: MilpModel) -> str:
    if not coeffs:
        # LP format has no empty expression; a zero term keeps it well-formed
        return f"0 {model.variables[0].name}"
    parts = []
    for i, (name, c) in enumerate(coeffs):
        mag = _num(abs(c))
        if i == 0:
            parts.append(f"{_num(c)} {name}")
        else:
            parts.append(f"{'-' if c < 0 else '+'} {mag} {name}")
    return " ".join(parts)


@dataclass(frozen=True)
class ParsedLp:
    """LP file contents: objective and rows over named variables."""

    objective: tuple[tuple[str, float], ...]
    rows: tuple[tuple[str, tuple[tuple[str, float], ...], str, float], ...]
    binaries: tuple[str, ...]
    generals: tuple[str, ...]
    bounds: dict[str, tuple[float, float]]

    def variable_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for name, _ in self.objective:
            seen.setdefault(name)
        for _, coeffs, _, _ in self.rows:
            for name, _ in coeffs:
                seen.setdefault(name)
        for name in self.binaries:
            seen.setdefault(name)
        for name in self.generals:
            seen.setdefault(name)
        return list(seen)


class LpParseError(ValueError):
    pass


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _parse_expression(tokens: list[str]) -> list[tuple[str, float]]:
    terms = []
    sign = 1.0
    coef: Optional[float] = None
    for tok in tokens:
        if tok == "+":
            continue
        if tok == "-":
            sign = -sign
            continue
        if _is_number(tok):
            if coef is not None:
                raise LpParseError(f"two consecutive numbers near {tok!r}")
            coef = float(tok)
            continue
        terms.append((tok, sign * (1.0 if coef is None else coef)))
        sign, coef = 1.0, None
    if coef is not None:
        raise LpParseError("dangling coefficient without a variable")
    return terms


def parse_lp(text: str) -> ParsedLp:
    """Parse the LP subset produced by emit_lp (case-insensitive keywords)."""
    sections: dict[str, list[str]] = {}
    current = None
    keywords = {
        "minimize": "objective",
        "subject": "rows",
        "st": "rows",
        "bounds": "bounds",
        "binary": "binary",
        "binaries": "binary",
        "general": "general",
        "generals": "general",
        "end": "end",
    }
    for raw in text.splitlines():
        line = raw.split("\\")[0].rstrip()
        if not line.strip():
            continue
        head = line.strip().split()[0].lower().rstrip(":")
        if head in keywords and not line.startswith(" "):
            current = keywords[head]
            if current == "end":
                break
            sections.setdefault(current, [])
            continue
        if current is None:
            raise LpParseError(f"content before any section: {line!r}")
        sections[current].append(line.strip())

    if "objective" not in sections:
        raise LpParseError("missing Minimize section")

    def split_rows(lines: list[str]) -> list[tuple[str, list[str]]]:
        rows: list[tuple[str, list[str]]] = []
        for ln in lines:
            toks = ln.replace("<=", " <= ").replace(">=", " >= ").split()
            if toks and toks[0].endswith(":"):
                rows.append((toks[0][:-1], toks[1:]))
            elif rows:
                rows[-1][1].extend(toks)
            else:
                rows.append(("", toks))
        return rows

    obj_rows = split_rows(sections["objective"])
    if len(obj_rows) != 1:
        raise LpParseError("expected a single objective expression")
    objective = tuple(_parse_expression(obj_rows[0][1]))

    rows = []
    for name, toks in split_rows(sections.get("rows", [])):
        sense_pos = [i for i, t in enumerate(toks) if t in ("<=", ">=", "=")]
        if len(sense_pos) != 1:
            raise LpParseError(f"constraint {name!r} needs exactly one relational operator")
        i = sense_pos[0]
        lhs = _parse_expression(toks[:i])
        rhs_toks = toks[i + 1 :]
        rhs = float("".join(rhs_toks))
        rows.append((name, tuple(lhs), toks[i], rhs))

    bounds: dict[str, tuple[float, float]] = {}
    for ln in sections.get("bounds", []):
        toks = ln.replace("<=", " <= ").split()
        if len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
            bounds[toks[2]] = (float(toks[0]), float(toks[4]))
        else:
            raise LpParseError(f"unsupported bounds line: {ln!r}")

    binaries = tuple(n for ln in sections.get("binary", []) for n in ln.split())
    generals = tuple(n for ln in sections.get("general", []) for n in ln.split())
    return ParsedLp(objective, tuple(rows), binaries, generals, bounds)


# ---------------------------------------------------------------------------
# Solution dialects
# ---------------------------------------------------------------------------


def parse_solution_text(text: str, dialect: str) -> tuple[str, Optional[float], dict[str, float]]:
    """Parse a solver solution file. Returns (status, objective, values)."""
    if dialect == "name-value":
        return _parse_name_value(text)
    if dialect == "cbc-style":
        return _parse_cbc(text)
    if dialect == "highs-style":
        return _parse_highs(text)
    raise InvalidArgumentError(f"unknown solution dialect {dialect!r}")


def _parse_name_value(text: str):
    status = None
    objective = None
    values: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if tok[0] == "status" and len(tok) == 2:
            status = tok[1]
        elif tok[0] == "objective" and len(tok) == 2:
            objective = float(tok[1])
        elif len(tok) == 2:
            values[tok[0]] = float(tok[1])
        else:
            raise LpParseError(f"bad name-value line: {line!r}")
    if status is None:
        status = "optimal" if values else "error"
    return status, objective, values


def _parse_cbc(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return "error", None, {}
    header = lines[0].strip()
    low = header.lower()
    if low.startswith("optimal"):
        status = "optimal"
    elif low.startswith("infeasible"):
        status = "infeasible"
    elif low.startswith("stopped on time"):
        status = "feasible"
    elif low.startswith("stopped"):
        status = "feasible"
    elif low.startswith("unbounded"):
        status = "error"
    else:
        status = "error"
    objective = None
    if "objective value" in low:
        try:
            objective = float(header.split()[-1])
        except ValueError:
            objective = None
    values: dict[str, float] = {}
    for ln in lines[1:]:
        tok = ln.split()
        # rows look like: <index> <name> <value> [<reduced cost>]
        if len(tok) >= 3:
            values[tok[1]] = float(tok[2])
    if status in ("optimal", "feasible") and not values:
        status = "timeout"
    return status, objective, values


def _parse_highs(text: str):
    lines = text.splitlines()
    status = "error"
    objective = None
    values: dict[str, float] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line == "Model status":
            i += 1
            while i < len(lines) and not lines[i].strip():
                i += 1
            word = lines[i].strip().lower() if i < len(lines) else ""
            status = {
                "optimal": "optimal",
                "infeasible": "infeasible",
                "time limit reached": "timeout",
            }.get(word, "error")
        elif line.startswith("Objective"):
            objective = float(line.split()[-1])
        elif line.startswith("# Columns"):
            count = int(line.split()[-1])
            for k in range(count):
                tok = lines[i + 1 + k].split()
                values[tok[0]] = float(tok[1])
            i += count
        i += 1
    if values and status == "timeout":
        status = "feasible"
    return status, objective, values


# ---------------------------------------------------------------------------
# External solving
# ---------------------------------------------------------------------------


def solve_external(model: MilpModel, config: SolverConfig) -> Assignment:
    """Write the LP, run the configured solver command, parse and verify.

    Integer values are rounded and re-checked against every constraint in
    exact arithmetic; on verification failure the result degrades to status
    "error". Work files are kept on errors and removed on success.
    """
    run_dir = Path(config.work_dir) / f"run-{uuid.uuid4().hex[:12]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    model_path = run_dir / "model.lp"
    solution_path = run_dir / "solution.txt"
    model_path.write_text(emit_lp(model))

    cmd = config.command_template.format(
        model=str(model_path), solution=str(solution_path), time_limit=config.time_limit
    )
    argv = shlex.split(cmd)
    # grace on top of the solver's own limit: process startup and file I/O
    hard_limit = config.time_limit + max(3.0, 0.5 * config.time_limit)
    t0 = time.monotonic()
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=hard_limit
        )
    except subprocess.TimeoutExpired:
        logger.warning("solver exceeded hard limit %.1fs: %s", hard_limit, argv[0])
        return Assignment({}, "timeout", None, f"killed after {hard_limit:.1f}s")
    except OSError as exc:
        return Assignment({}, "error", None, f"failed to launch solver: {exc}")
    elapsed = time.monotonic() - t0

    if proc.returncode != 0:
        return Assignment(
            {}, "error", None,
            f"solver exited {proc.returncode}; files kept in {run_dir}\n"
            f"stdout: {proc.stdout[-2000:]}\nstderr: {proc.stderr[-2000:]}",
        )
    if not solution_path.exists():
        return Assignment(
            {}, "error", None, f"solver wrote no solution file; files kept in {run_dir}"
        )
    try:
        status, objective, values = parse_solution_text(
            solution_path.read_text(), config.solution_dialect
        )
    except (ValueError, IndexError) as exc:
        return Assignment({}, "error", None, f"unparsable solution ({exc}); files in {run_dir}")

    if status not in ("optimal", "feasible"):
        _cleanup(run_dir)
        return Assignment({}, status, None, f"solver status {status} after {elapsed:.2f}s")

    rounded: dict[str, float] = {}
    for v in model.variables:
        if v.name not in values:
            return Assignment(
                {}, "error", None,
                f"solution missing variable {v.name}; files kept in {run_dir}",
            )
        rounded[v.name] = float(round(values[v.name]))
    try:
        bad = check_assignment(model, rounded)
    except InvalidArgumentError as exc:
        return Assignment({}, "error", None, f"re-verification failed: {exc}")
    if bad is not None:
        return Assignment(
            {}, "error", None,
            f"re-verification failed on constraint {bad.name} (family {bad.family}); "
            f"files kept in {run_dir}",
        )
    _cleanup(run_dir)
    return Assignment(rounded, status, model.objective_value(rounded))


def _cleanup(run_dir: Path) -> None:
    try:
        for p in run_dir.iterdir():
            p.unlink()
        run_dir.rmdir()
    except OSError:
        pass


# ---------------------------------------------------------------------------
# Reference solver (exhaustive, with propagation)
# ---------------------------------------------------------------------------


class ReferenceSolverLimitError(RuntimeError):
    """The search exceeded its node budget."""


class _RefProblem:
    def __init__(self, model: MilpModel):
        self.model = model
        self.names = [v.name for v in model.variables]
        self.index = {n: i for i, n in enumerate(self.names)}
        self.lo = [v.bounds[0] for v in model.variables]
        self.hi = [v.bounds[1] for v in model.variables]
        self.cons = []
        for c in model.constraints:
            idx = [self.index[n] for n, _ in c.coefficients]
            coe = [float(co) for _, co in c.coefficients]
            tol = _ref_tolerance(c)
            self.cons.append((idx, coe, c.sense, float(c.rhs), tol))
        self.obj = [(self.index[n], float(co)) for n, co in model.objective]
        # constraints touching each variable, for incremental propagation
        self.touch: list[list[int]] = [[] for _ in self.names]
        for ci, (idx, _, _, _, _) in enumerate(self.cons):
            for i in idx:
                self.touch[i].append(ci)


def _ref_tolerance(c: Constraint) -> float:
    integral = float(c.rhs).is_integer() and all(
        float(co).is_integer() for _, co in c.coefficients
    )
    if integral:
        return 1e-9
    scale = max([1.0, abs(c.rhs)] + [abs(co) for _, co in c.coefficients])
    return 1e-9 * scale


def _propagate(pb: _RefProblem, lo, hi, dirty) -> bool:
    """Bounds propagation to a fixpoint; False when a constraint is violated."""
    queue = list(dirty)
    in_queue = set(queue)
    while queue:
        ci = queue.pop()
        in_queue.discard(ci)
        idx, coe, sense, rhs, tol = pb.cons[ci]
        minact = 0.0
        maxact = 0.0
        for i, co in zip(idx, coe):
            if co > 0:
                minact += co * lo[i]
                maxact += co * hi[i]
            else:
                minact += co * hi[i]
                maxact += co * lo[i]
        if sense in ("<=", "=") and minact > rhs + tol:
            return False
        if sense in (">=", "=") and maxact < rhs - tol:
            return False
        for i, co in zip(idx, coe):
            if co == 0.0 or lo[i] == hi[i]:
                continue
            own_min = co * (lo[i] if co > 0 else hi[i])
            own_max = co * (hi[i] if co > 0 else lo[i])
            new_lo, new_hi = lo[i], hi[i]
            if sense in ("<=", "="):
                room = rhs + tol - (minact - own_min)  # co * x_i <= room
                if co > 0:
                    new_hi = min(new_hi, _floor(room / co))
                else:
                    new_lo = max(new_lo, _ceil(room / co))
            if sense in (">=", "="):
                need = rhs - tol - (maxact - own_max)  # co * x_i >= need
                if co > 0:
                    new_lo = max(new_lo, _ceil(need / co))
                else:
                    new_hi = min(new_hi, _floor(need / co))
            if new_lo > lo[i] or new_hi < hi[i]:
                if new_lo > new_hi:
                    return False
                lo[i], hi[i] = new_lo, new_hi
                for cj in pb.touch[i]:
                    if cj not in in_queue:
                        queue.append(cj)
                        in_queue.add(cj)
    return True


def _floor(x: float) -> int:
    return math.floor(x + 1e-9)


def _ceil(x: float) -> int:
    return math.ceil(x - 1e-9)


def solve_reference(model: MilpModel, node_limit: int = 2**24) -> Assignment:
    """Provably optimal assignment by exhaustive DFS with propagation.

    Deterministic: branches on variables in declaration order, lower value
    first. Raises ReferenceSolverLimitError past `node_limit` search nodes.
    """
    pb = _RefProblem(model)
    n = len(pb.names)
    best_obj = [float("inf")]
    best_assign: list[Optional[list[int]]] = [None]
    nodes = [0]

    def obj_lower_bound(lo, hi) -> float:
        return sum(co * (lo[i] if co > 0 else hi[i]) for i, co in pb.obj)

    def dfs(lo, hi, start):
        nodes[0] += 1
        if nodes[0] > node_limit:
            raise ReferenceSolverLimitError(f"exceeded {node_limit} nodes")
        if obj_lower_bound(lo, hi) >= best_obj[0] - 1e-12:
            return
        i = start
        while i < n and lo[i] == hi[i]:
            i += 1
        if i == n:
            val = sum(co * lo[j] for j, co in pb.obj)
            if val < best_obj[0]:
                best_obj[0] = val
                best_assign[0] = list(lo)
            return
        for value in range(lo[i], hi[i] + 1):
            clo, chi = list(lo), list(hi)
            clo[i] = chi[i] = value
            if _propagate(pb, clo, chi, pb.touch[i]):
                dfs(clo, chi, i + 1)

    lo, hi = list(pb.lo), list(pb.hi)
    if not _propagate(pb, lo, hi, range(len(pb.cons))):
        return Assignment({}, "infeasible")
    dfs(lo, hi, 0)
    if best_assign[0] is None:
        return Assignment({}, "infeasible")
    values = {pb.names[i]: float(best_assign[0][i]) for i in range(n)}
    return Assignment(values, "optimal", best_obj[0])


def enumerate_assignments(
    model: MilpModel,
    variables: Optional[list[str]] = None,
    node_limit: int = 2**24,
) -> Iterator[dict[str, int]]:
    """Yield every feasible combination of the given variables (default all).

    When `variables` is a proper subset, each yielded combination is one for
    which a feasible completion of the remaining variables exists.
    """
    pb = _RefProblem(model)
    n = len(pb.names)
    if variables is None:
        chosen = list(range(n))
    else:
        chosen = [pb.index[v] for v in variables]
    chosen_set = set(chosen)
    rest = [i for i in range(n) if i not in chosen_set]
    nodes = [0]

    def completion_exists(lo, hi) -> bool:
        def go(lo, hi, k):
            nodes[0] += 1
            if nodes[0] > node_limit:
                raise ReferenceSolverLimitError(f"exceeded {node_limit} nodes")
            while k < len(rest) and lo[rest[k]] == hi[rest[k]]:
                k += 1
            if k == len(rest):
                return True
            i = rest[k]
            for value in range(lo[i], hi[i] + 1):
                clo, chi = list(lo), list(hi)
                clo[i] = chi[i] = value
                if _propagate(pb, clo, chi, pb.touch[i]) and go(clo, chi, k + 1):
                    return True
            return False

        return go(list(lo), list(hi), 0)

    def dfs(lo, hi, k) -> Iterator[dict[str, int]]:
        nodes[0] += 1
        if nodes[0] > node_limit:
            raise ReferenceSolverLimitError(f"exceeded {node_limit} nodes")
        while k < len(chosen) and lo[chosen[k]] == hi[chosen[k]]:
            k += 1
        if k == len(chosen):
            if completion_exists(lo, hi):
                yield {pb.names[i]: lo[i] for i in chosen}
            return
        i = chosen[k]
        for value in range(lo[i], hi[i] + 1):
            clo, chi = list(lo), list(hi)
            clo[i] = chi[i] = value
            if _propagate(pb, clo, chi, pb.touch[i]):
                yield from dfs(clo, chi, k + 1)

    lo, hi = list(pb.lo), list(pb.hi)
    if _propagate(pb, lo, hi, range(len(pb.cons))):
        yield from dfs(lo, hi, 0)
