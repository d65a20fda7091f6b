"""Join-order optimization toolkit.

Query graphs and the exact cost evaluator live in `core`; exact oracles in
`exact`; classical algorithms in `heuristics`; the template MILP encoding in
`milp_model` with solving in `milp_solver`; the combined pipeline in
`hybrid`; and the benchmark harness in `bench` / `cli`.
"""

from ._kernels import KERNEL_BACKEND
from .core import (
    InvalidArgumentError,
    InvalidTreeError,
    Join,
    JoinTree,
    Leaf,
    PlanResult,
    Predicate,
    QueryGraph,
    Relation,
    intermediate_cardinality,
    left_deep_tree,
    plan_cost,
    tree_leaves,
    tree_to_string,
    validate_tree,
)
from .exact import brute_force_optimal, dpsize
from .heuristics import (
    LinearOrder,
    adaptive,
    genetic,
    goo,
    goo_dp,
    ikkbz,
    linearized_dp,
    minsel,
    quickpick,
)
from .hybrid import derive_part_problems, hybrid_milp, stitch
from .milp_model import (
    JoinSlot,
    JoinTemplate,
    MilpModel,
    PartialPlan,
    Thresholds,
    approx_cost,
    build_template,
    decode,
    derive_thresholds,
    encode,
    universal_template,
)
from .milp_solver import (
    Assignment,
    SolverConfig,
    default_solver_config,
    emit_lp,
    enumerate_assignments,
    solve_external,
    solve_reference,
)
from .queryio import GeneratorParams, generate_tree_query, read_graph, write_graph

__version__ = "0.1.0"
