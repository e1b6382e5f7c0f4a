"""Problem abstraction: domains, objectives, semi-infinite constraints, catalog."""

from .catalog import NAMES, catalog_build
from .constraints import (
    STRATEGIES,
    PowerFeatureConstraint,
    ScenarioConstraint,
    SemiInfiniteConstraint,
    TerminalSetConstraint,
)
from .core import (
    G0Estimate,
    OracleCheck,
    SipProblem,
    SumObjective,
    check_constraint,
    check_objective,
    estimate_g0,
    fd_gradient,
    find_interior_point,
    inner_maximize,
    sampled_index_lipschitz,
    subgradient_sum,
)
from .domain import DomainBall, DomainBox, DomainSet, IndexSet, ProblemError, project_domain
from .objectives import LinearQuadraticObjective, QuadAbsObjective, sum_quad_abs
from .search import bounded_max

__all__ = [
    "NAMES", "STRATEGIES", "DomainBall", "DomainBox", "DomainSet", "G0Estimate", "IndexSet",
    "LinearQuadraticObjective", "OracleCheck", "PowerFeatureConstraint", "ProblemError",
    "QuadAbsObjective", "ScenarioConstraint", "SemiInfiniteConstraint", "SipProblem",
    "SumObjective", "TerminalSetConstraint", "catalog_build", "check_constraint",
    "check_objective", "estimate_g0", "fd_gradient", "find_interior_point", "bounded_max",
    "inner_maximize", "project_domain", "sampled_index_lipschitz", "subgradient_sum",
    "sum_quad_abs",
]
