"""Time-varying communication graphs and their doubly-stochastic weight schedules.

Every generator here produces a periodic schedule: round ``k`` (1-based) uses
``matrices[(k - 1) % period]``. Row ``i`` of a weight matrix holds the weights
node ``i`` applies to the estimates it receives, so ``A[i, j] > 0`` means an
edge ``j -> i``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

KINDS = ("static-cycle", "static-line", "periodic-rotation", "seeded-gossip")

SUM_TOL = 1e-12


class GraphError(ValueError):
    """Raised when a graph cannot be built from the given parameters."""


@dataclass(frozen=True)
class TransitionConstants:
    """Decay constants for products of weight matrices."""

    gamma: float
    beta: float

    @classmethod
    def from_graph_params(cls, eta: float, V: int, B: int) -> "TransitionConstants":
        base = 1.0 - eta / (4.0 * V * V)
        return cls(gamma=base ** -2, beta=base ** (1.0 / B))


@dataclass(frozen=True, eq=False)
class TimeVaryingGraph:
    kind: str
    V: int
    eta: float
    B: int
    matrices: tuple[np.ndarray, ...] = field(repr=False)
    seed: int | None = None

    @property
    def period(self) -> int:
        return len(self.matrices)

    @property
    def constants(self) -> TransitionConstants:
        return TransitionConstants.from_graph_params(self.eta, self.V, self.B)

    def weight_matrix_at(self, k: int) -> np.ndarray:
        if k < 1:
            raise ValueError(f"round index must be >= 1, got {k}")
        return self.matrices[(k - 1) % self.period]

    @classmethod
    def from_matrices(
        cls, matrices: Sequence[np.ndarray], eta: float, B: int, kind: str = "custom"
    ) -> "TimeVaryingGraph":
        """Wrap an explicit schedule without validating it (see :func:`validate_graph`)."""
        mats = tuple(np.array(m, dtype=float) for m in matrices)
        if not mats:
            raise GraphError("schedule needs at least one matrix")
        V = mats[0].shape[0]
        for m in mats:
            if m.shape != (V, V):
                raise GraphError(f"all matrices must be {V}x{V}, got {m.shape}")
        for m in mats:
            m.setflags(write=False)
        return cls(kind=kind, V=V, eta=float(eta), B=int(B), matrices=mats)


def weight_matrix_at(graph: TimeVaryingGraph, k: int) -> np.ndarray:
    return graph.weight_matrix_at(k)


def _cycle_matrix(V: int, self_weight: float) -> np.ndarray:
    A = self_weight * np.eye(V)
    for i in range(V):
        A[i, (i - 1) % V] += 1.0 - self_weight
    return A


def _metropolis(V: int, edges: Sequence[tuple[int, int]]) -> np.ndarray:
    """Metropolis-Hastings weights on an undirected edge set; self-loops absorb the rest."""
    undirected = {tuple(sorted(e)) for e in edges if e[0] != e[1]}
    deg = np.zeros(V, dtype=int)
    for i, j in undirected:
        deg[i] += 1
        deg[j] += 1
    A = np.zeros((V, V))
    for i, j in undirected:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        A[i, j] = A[j, i] = w
    A[np.diag_indices(V)] = 1.0 - A.sum(axis=1)
    return A


def _min_positive(mats: Sequence[np.ndarray]) -> float:
    return float(min(m[m > 0].min() for m in mats))


def build_graph(
    kind: str,
    V: int,
    B: int | None = None,
    eta: float | None = None,
    self_weight: float = 0.5,
    seed: int = 0,
) -> TimeVaryingGraph:
    """Build and validate one of the supported schedules.

    ``eta`` defaults to the smallest positive weight the schedule uses; an
    explicit value must lie in (0, 1) and not exceed that weight. ``B``
    defaults to the smallest window the construction guarantees.
    """
    if V < 1:
        raise GraphError(f"V must be a positive integer, got {V}")
    if eta is not None and not 0.0 < eta < 1.0:
        raise GraphError(f"eta must lie in (0, 1), got {eta}")

    if kind == "static-cycle":
        if not 0.0 < self_weight < 1.0:
            raise GraphError(f"self_weight must lie in (0, 1), got {self_weight}")
        mats = [_cycle_matrix(V, self_weight)] if V > 1 else [np.eye(1)]
        default_B = 1
    elif kind == "static-line":
        mats = [_metropolis(V, [(i, i + 1) for i in range(V - 1)])]
        default_B = 1
    elif kind == "periodic-rotation":
        groups = B if B is not None else 2
        if groups < 1:
            raise GraphError(f"B must be a positive integer, got {groups}")
        edges = [(i, (i + 1) % V) for i in range(V)] if V > 1 else []
        mats = [
            _metropolis(V, [e for idx, e in enumerate(edges) if idx % groups == g])
            for g in range(groups)
        ]
        default_B = groups
    elif kind == "seeded-gossip":
        if V < 2:
            raise GraphError("seeded-gossip needs V >= 2")
        rng = np.random.default_rng(seed)
        edges = sorted({tuple(sorted((i, (i + 1) % V))) for i in range(V)})
        order = rng.permutation(len(edges))
        mats = []
        for idx in order:
            i, j = edges[idx]
            A = np.eye(V)
            A[i, i] = A[j, j] = A[i, j] = A[j, i] = 0.5
            mats.append(A)
        # dropping any single cycle edge leaves a path, so every window of
        # period - 1 rounds is strongly connected (a 2-node "cycle" has one edge)
        default_B = max(len(edges) - 1, 1) if V > 2 else 1
    else:
        raise GraphError(f"unknown graph kind {kind!r}; expected one of {KINDS}")

    actual_eta = _min_positive(mats)
    if eta is None:
        eta = actual_eta
    elif eta > actual_eta + SUM_TOL:
        raise GraphError(
            f"eta={eta} exceeds the smallest positive weight {actual_eta:.6g} of the {kind} schedule"
        )
    B = default_B if B is None else int(B)
    if B < 1:
        raise GraphError(f"B must be a positive integer, got {B}")
    graph = TimeVaryingGraph.from_matrices(mats, eta=eta, B=B, kind=kind)
    object.__setattr__(graph, "seed", seed if kind == "seeded-gossip" else None)
    return graph


def is_strongly_connected(adjacency: np.ndarray) -> bool:
    if adjacency.shape[0] <= 1:
        return True
    n, _ = connected_components(adjacency > 0, directed=True, connection="strong")
    return n == 1


@dataclass
class RoundCheck:
    round: int
    max_row_residual: float
    max_col_residual: float
    min_pos_entry: float
    window_connected: bool
    eta_ok: bool


@dataclass
class ValidationReport:
    V: int
    eta: float
    B: int
    horizon: int
    rounds: list[RoundCheck]

    @property
    def passed(self) -> bool:
        return all(
            r.max_row_residual <= SUM_TOL
            and r.max_col_residual <= SUM_TOL
            and r.eta_ok
            and r.window_connected
            for r in self.rounds
        )

    def first_failure(self) -> RoundCheck | None:
        for r in self.rounds:
            if not (r.max_row_residual <= SUM_TOL and r.max_col_residual <= SUM_TOL
                    and r.eta_ok and r.window_connected):
                return r
        return None

    @property
    def min_pos_entry(self) -> float:
        return min(r.min_pos_entry for r in self.rounds)

    def summary(self) -> str:
        lines = [
            f"graph validation: V={self.V} eta={self.eta:.6g} B={self.B} horizon={self.horizon}",
            f"  max row residual: {max(r.max_row_residual for r in self.rounds):.3e}",
            f"  max col residual: {max(r.max_col_residual for r in self.rounds):.3e}",
            f"  min positive entry: {self.min_pos_entry:.6g}",
            f"  windows connected: {sum(r.window_connected for r in self.rounds)}/{len(self.rounds)}",
        ]
        bad = self.first_failure()
        if bad is None:
            lines.append("  result: PASS")
        else:
            lines.append(f"  result: FAIL (first failing round {bad.round})")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "max_row_residual", "max_col_residual", "min_pos_entry", "window_connected"])
        for r in self.rounds:
            w.writerow([r.round, f"{r.max_row_residual:.17g}", f"{r.max_col_residual:.17g}",
                        f"{r.min_pos_entry:.17g}", int(r.window_connected)])
        return buf.getvalue()


def validate_graph(graph: TimeVaryingGraph, horizon: int) -> ValidationReport:
    """Check doubly-stochasticity, the eta floor and B-window strong connectivity.

    The window verdict for round ``k`` covers rounds ``k .. k+B-1``; it is
    evaluated for every ``k`` in ``1 .. horizon``. Failures are reported,
    never raised.
    """
    if horizon < graph.B:
        raise ValueError(f"horizon ({horizon}) must be >= B ({graph.B})")
    rounds = []
    for k in range(1, horizon + 1):
        A = graph.weight_matrix_at(k)
        pos = A[A > 0]
        union = np.zeros_like(A, dtype=bool)
        for tau in range(graph.B):
            union |= graph.weight_matrix_at(k + tau) > 0
        rounds.append(
            RoundCheck(
                round=k,
                max_row_residual=float(np.abs(A.sum(axis=1) - 1.0).max()),
                max_col_residual=float(np.abs(A.sum(axis=0) - 1.0).max()),
                min_pos_entry=float(pos.min()) if pos.size else 0.0,
                window_connected=is_strongly_connected(union),
                eta_ok=bool(pos.size and pos.min() >= graph.eta - SUM_TOL and (A >= 0).all()),
            )
        )
    return ValidationReport(V=graph.V, eta=graph.eta, B=graph.B, horizon=horizon, rounds=rounds)


def transition_product(graph: TimeVaryingGraph, t: int, s: int) -> np.ndarray:
    """``A(t) A(t-1) ... A(s)``."""
    if t < s:
        raise ValueError(f"transition_product needs t >= s, got t={t}, s={s}")
    if s < 1:
        raise ValueError(f"round index must be >= 1, got s={s}")
    phi = graph.weight_matrix_at(s).copy()
    for k in range(s + 1, t + 1):
        phi = graph.weight_matrix_at(k) @ phi
    return phi


def transition_decay_bound(constants: TransitionConstants, t: int, s: int, V: int | None = None) -> float:
    """Entrywise bound on ``|Phi(t, s)_ij - 1/V|``."""
    if t <= s:
        raise ValueError(f"decay bound needs t > s, got t={t}, s={s}")
    return constants.gamma * constants.beta ** (t - s)
