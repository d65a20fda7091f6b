"""Random tree-query generation and the text file format for query graphs.

Generated workloads are uniform random labeled trees with log-uniform
cardinalities and selectivities, as a reproducible stand-in for externally
generated tree-query benchmarks.

File format (line oriented, '#' starts a comment line)::

    relations <R>
    rel <id> <name> <cardinality>     (R lines)
    predicates <P>
    pred <id_a> <id_b> <selectivity>  (P lines)

Floating point values use '.' as decimal separator, no locale.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError, Predicate, QueryGraph, Relation


@dataclass(frozen=True)
class GeneratorParams:
    """Parameters for random tree-query generation.

    Cardinalities are drawn log-uniform from 10**card_log10_range and
    selectivities log-uniform from 10**sel_log10_range.
    """

    n_relations: int
    seed: int = 0
    card_log10_range: tuple[float, float] = (1.0, 6.0)
    sel_log10_range: tuple[float, float] = (-4.0, 0.0)

    def __post_init__(self):
        if self.n_relations < 2:
            raise InvalidArgumentError("n_relations must be >= 2")
        lo, hi = self.card_log10_range
        if lo > hi or lo < 0:
            raise InvalidArgumentError(f"bad cardinality range {self.card_log10_range}")
        lo, hi = self.sel_log10_range
        if lo > hi or hi > 0:
            raise InvalidArgumentError(
                f"selectivity log10 range must be nonpositive and ordered, "
                f"got {self.sel_log10_range}"
            )


def _tree_edges_from_pruefer(seq: list[int], n: int) -> list[tuple[int, int]]:
    """Decode a Pruefer sequence into the edge list of a labeled tree on n nodes."""
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    # nodes of degree 1 not in the remaining sequence, smallest first
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, v))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    u = heapq.heappop(leaves)
    w = heapq.heappop(leaves)
    edges.append((u, w))
    return edges


def generate_tree_query(params: GeneratorParams) -> QueryGraph:
    """Generate a connected acyclic query graph with n_relations-1 predicates.

    Deterministic: identical params produce an identical graph. Tree topology
    is uniform over labeled trees (random Pruefer sequence from a PCG64
    generator seeded with params.seed).
    """
    n = params.n_relations
    rng = np.random.default_rng(params.seed)
    if n == 2:
        edges = [(0, 1)]
    else:
        seq = rng.integers(0, n, size=n - 2).tolist()
        edges = _tree_edges_from_pruefer(seq, n)

    clo, chi = params.card_log10_range
    cards = 10.0 ** rng.uniform(clo, chi, size=n)
    slo, shi = params.sel_log10_range
    sels = 10.0 ** rng.uniform(slo, shi, size=len(edges))
    # clamp against float round-up past 1.0
    sels = np.minimum(sels, 1.0)

    relations = [Relation(i, f"r{i}", float(max(1.0, cards[i]))) for i in range(n)]
    predicates = [
        Predicate(min(a, b), max(a, b), float(sels[k])) for k, (a, b) in enumerate(edges)
    ]
    return QueryGraph(relations, predicates)


class GraphFormatError(ValueError):
    """Parse error in the query-graph text format, with line information."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


def write_graph(graph: QueryGraph) -> str:
    """Serialize a query graph to the line-oriented text format."""
    lines = [f"relations {graph.n_relations}"]
    for r in graph.relations:
        lines.append(f"rel {r.id} {r.name} {r.cardinality!r}")
    lines.append(f"predicates {graph.n_predicates}")
    for p in graph.predicates:
        lines.append(f"pred {p.rel_a} {p.rel_b} {p.selectivity!r}")
    return "\n".join(lines) + "\n"


def read_graph(text: str) -> QueryGraph:
    """Parse the text format back into a QueryGraph.

    Raises GraphFormatError carrying the offending line number.
    """
    rows = []  # (line_no, tokens)
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rows.append((i, line.split()))

    pos = 0

    def take(expected: str) -> tuple[int, list[str]]:
        nonlocal pos
        if pos >= len(rows):
            last = rows[-1][0] if rows else 0
            raise GraphFormatError(last + 1, f"unexpected end of input, expected {expected}")
        row = rows[pos]
        pos += 1
        return row

    line_no, tok = take("'relations <R>'")
    if tok[0] != "relations" or len(tok) != 2:
        raise GraphFormatError(line_no, f"expected 'relations <R>', got {' '.join(tok)!r}")
    try:
        n_rel = int(tok[1])
    except ValueError:
        raise GraphFormatError(line_no, f"relation count is not an integer: {tok[1]!r}")
    if n_rel < 2:
        raise GraphFormatError(line_no, "at least 2 relations required")

    relations = []
    for _ in range(n_rel):
        line_no, tok = take("'rel <id> <name> <cardinality>'")
        if tok[0] != "rel" or len(tok) != 4:
            raise GraphFormatError(line_no, f"expected 'rel <id> <name> <cardinality>', got {' '.join(tok)!r}")
        try:
            rid, card = int(tok[1]), float(tok[3])
        except ValueError:
            raise GraphFormatError(line_no, f"bad relation fields: {' '.join(tok)!r}")
        if card < 1:
            raise GraphFormatError(line_no, f"cardinality must be >= 1, got {card}")
        relations.append(Relation(rid, tok[2], card))

    line_no, tok = take("'predicates <P>'")
    if tok[0] != "predicates" or len(tok) != 2:
        raise GraphFormatError(line_no, f"expected 'predicates <P>', got {' '.join(tok)!r}")
    try:
        n_pred = int(tok[1])
    except ValueError:
        raise GraphFormatError(line_no, f"predicate count is not an integer: {tok[1]!r}")

    predicates = []
    for _ in range(n_pred):
        line_no, tok = take("'pred <id_a> <id_b> <selectivity>'")
        if tok[0] != "pred" or len(tok) != 4:
            raise GraphFormatError(line_no, f"expected 'pred <id_a> <id_b> <selectivity>', got {' '.join(tok)!r}")
        try:
            a, b, sel = int(tok[1]), int(tok[2]), float(tok[3])
        except ValueError:
            raise GraphFormatError(line_no, f"bad predicate fields: {' '.join(tok)!r}")
        if not (0.0 < sel <= 1.0):
            raise GraphFormatError(line_no, "selectivity out of (0,1]")
        for end in (a, b):
            if not (0 <= end < n_rel):
                raise GraphFormatError(line_no, f"unknown relation id {end} in predicate")
        if a == b:
            raise GraphFormatError(line_no, f"predicate joins relation {a} with itself")
        predicates.append(Predicate(a, b, sel))

    if pos != len(rows):
        line_no, tok = rows[pos]
        raise GraphFormatError(line_no, f"trailing content: {' '.join(tok)!r}")

    try:
        return QueryGraph(relations, predicates)
    except InvalidArgumentError as exc:
        raise GraphFormatError(0, str(exc))
