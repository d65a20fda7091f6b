import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from joinopt.core import Predicate, QueryGraph, Relation
from joinopt.queryio import GeneratorParams, generate_tree_query


@pytest.fixture
def g0() -> QueryGraph:
    """Four-relation chain A-B-C-D used throughout the tests:
    cards 100/10/1000/10, selectivities 0.01/0.01/1.0."""
    return QueryGraph(
        [
            Relation(0, "A", 100),
            Relation(1, "B", 10),
            Relation(2, "C", 1000),
            Relation(3, "D", 10),
        ],
        [Predicate(0, 1, 0.01), Predicate(1, 2, 0.01), Predicate(2, 3, 1.0)],
    )


def tree_query(n: int, seed: int, card_range=(1.0, 6.0), sel_range=(-4.0, 0.0)) -> QueryGraph:
    return generate_tree_query(
        GeneratorParams(n, seed=seed, card_log10_range=card_range, sel_log10_range=sel_range)
    )


def rel_close(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))
