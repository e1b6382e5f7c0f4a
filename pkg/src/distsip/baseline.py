"""Scenario baseline: fix sampled constraint indices up front, split them across nodes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import TimeVaryingGraph
from .problem import IndexSet, ScenarioConstraint, SipProblem
from .solver import RunResult, SolverConfig, run


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    samples: np.ndarray   # (N, m)
    seed: int

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    def allocation(self, V: int) -> list[np.ndarray]:
        """Even split across ``V`` nodes; the first ``N mod V`` nodes get one extra."""
        q, r = divmod(self.N, V)
        sizes = [q + (1 if i < r else 0) for i in range(V)]
        bounds = np.cumsum([0] + sizes)
        return [self.samples[bounds[i]:bounds[i + 1]] for i in range(V)]


def sample_scenarios(U: IndexSet, N: int, seed: int) -> ScenarioSet:
    if N < 1:
        raise ValueError(f"need at least one scenario, got N={N}")
    pts = np.random.default_rng(seed).uniform(U.lower, U.upper, size=(N, U.dim))
    pts.setflags(write=False)
    return ScenarioSet(pts, seed)


def run_scenario_baseline(
    problem: SipProblem,
    graph: TimeVaryingGraph,
    cfg: SolverConfig,
    scenarios: ScenarioSet,
    metrics: bool = True,
    run_id: str = "run",
) -> RunResult:
    """The main solver with each node's inner loop restricted to its own scenarios.

    Violations in the returned metrics are still measured against the full
    index set of ``problem``.
    """
    parts = scenarios.allocation(problem.V)
    if any(len(p) == 0 for p in parts):
        raise ValueError(f"{scenarios.N} scenarios cannot cover {problem.V} nodes")
    cons = [ScenarioConstraint(problem.constraint, p) for p in parts]
    return run(problem, graph, cfg, node_constraints=cons, metrics=metrics,
               method=f"dsa-{scenarios.N}", run_id=run_id)
