"""Distributed alternating gradient descent: mix, outer step, inner feasibility descent."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import TimeVaryingGraph
from .problem import SemiInfiniteConstraint, SipProblem
from .problem.domain import DomainSet

INIT_MODES = ("zeros", "uniform", "explicit")
DEGENERATE_GRAD_SQ = 1e-18


class SolverError(RuntimeError):
    """Runtime failure inside a run; carries the offending round and node when known."""

    def __init__(self, msg: str, k: int | None = None, node: int | None = None):
        where = "" if k is None else f" (round k={k}, node {node})"
        super().__init__(msg + where)
        self.k, self.node = k, node


class InnerLoopError(SolverError):
    pass


class DegenerateGradientError(SolverError):
    pass


class InfeasibleStartError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    K: int
    c_gamma: float = 1.0
    c_eps: float = 1.0
    cap_factor: float = 10.0
    initial_repair: bool = True
    init: str = "zeros"
    x_init: tuple | None = None
    seed: int = 0
    workers: int = 1
    timing: bool = True

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K}")
        if not (self.c_gamma > 0 and self.c_eps > 0):
            raise ValueError("c_gamma and c_eps must be positive")
        if not self.cap_factor >= 1:
            raise ValueError(f"cap_factor must be >= 1, got {self.cap_factor}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        if self.init == "explicit" and self.x_init is None:
            raise ValueError("init='explicit' needs x_init")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def gamma(self, k: int, D: float) -> float:
        return self.c_gamma * D / math.sqrt(k)

    def eps(self, k: int) -> float:
        return self.c_eps / math.sqrt(k)

    def tail_start(self) -> int:
        return self.K // 2


# --- elementary steps -------------------------------------------------------

def mix(weights_row: np.ndarray, estimates: np.ndarray) -> np.ndarray:
    estimates = np.asarray(estimates, dtype=float)
    weights_row = np.asarray(weights_row, dtype=float)
    if estimates.ndim != 2 or weights_row.shape != (estimates.shape[0],):
        raise ValueError(f"weight row of shape {weights_row.shape} does not match "
                         f"{estimates.shape[0]} estimates")
    return weights_row @ estimates


def outer_step(v: np.ndarray, g: np.ndarray, gamma: float, X: DomainSet) -> np.ndarray:
    return X.project(v - gamma * g)


def ball_project(center: np.ndarray, radius: float, p: np.ndarray) -> np.ndarray:
    d = p - center
    dist = float(np.linalg.norm(d))
    if dist <= radius:
        return p
    return center + (radius / dist) * d


def polyak_step(f_val: float, grad_norm_sq: float) -> float:
    if grad_norm_sq <= DEGENERATE_GRAD_SQ:
        raise DegenerateGradientError(
            f"constraint gradient vanished (|grad|^2 = {grad_norm_sq:.3g}) at an infeasible point; "
            "the gradient lower bound G0 does not hold here")
    return f_val / grad_norm_sq


def ball_radius(k: int, problem: SipProblem, cfg: SolverConfig) -> float:
    return cfg.gamma(k, problem.D) * problem.L_F + cfg.eps(k) / problem.G0


def safety_cap(k: int, problem: SipProblem, cfg: SolverConfig) -> int:
    """``cap_factor`` times the per-round inner-iteration bound, rounded up."""
    from .analysis import inner_cap, repair_cap
    base = repair_cap(problem, cfg) if k == 0 else inner_cap(k, problem, cfg)
    return max(1, math.ceil(cfg.cap_factor * base))


# --- inner loop and node round -----------------------------------------------

@dataclass
class InnerTrace:
    steps: int = 0
    stepsizes: list = field(default_factory=list)
    max_dist: float = 0.0


def inner_descent(
    z: np.ndarray,
    k: int,
    problem: SipProblem,
    cfg: SolverConfig,
    constraint: SemiInfiniteConstraint | None = None,
    node: int | None = None,
    trace: bool = False,
) -> tuple[np.ndarray, int, InnerTrace | None]:
    """Polyak descent on ``max_u f`` inside ``ball(z, rho_k) ∩ X`` until ``<= eps_{k+1}``.

    ``k = 0`` is the initial repair: tolerance ``eps_1`` and the ball is all of X.
    """
    c = constraint or problem.constraint
    X = problem.domain
    tol = cfg.eps(k + 1)
    rho = math.inf if k == 0 else ball_radius(k, problem, cfg)
    cap = safety_cap(k, problem, cfg)
    tr = InnerTrace() if trace else None

    x = z
    u, val = c.maximize(x)
    steps = 0
    while val > tol:
        if steps >= cap:
            raise InnerLoopError(
                f"inner loop hit the safety cap of {cap} steps with violation {val:.6g} > {tol:.6g}; "
                "likely causes: configured G0 too large, L_F too small, or the maximizer grid "
                "is too coarse", k, node)
        g = c.grad_x(x, u)
        try:
            lam = polyak_step(val, float(g @ g))
        except DegenerateGradientError as e:
            raise DegenerateGradientError(str(e), k, node) from None
        p = x - lam * g
        if rho < math.inf:
            p = ball_project(z, rho, p)
        x = X.project(p)
        u, val = c.maximize(x)
        steps += 1
        if tr is not None:
            tr.stepsizes.append(lam)
            tr.max_dist = max(tr.max_dist, float(np.linalg.norm(x - z)))
    if tr is not None:
        tr.steps = steps
    return x, steps, tr


@dataclass
class RoundTrace:
    v: np.ndarray
    z: np.ndarray
    steps: int
    x_next: np.ndarray
    ns: int
    inner: InnerTrace | None = None


def node_round(
    i: int,
    k: int,
    snapshot: np.ndarray,
    graph: TimeVaryingGraph,
    problem: SipProblem,
    cfg: SolverConfig,
    constraint: SemiInfiniteConstraint | None = None,
    trace: bool = False,
) -> tuple[np.ndarray, RoundTrace]:
    t0 = time.perf_counter_ns()
    v = mix(graph.weight_matrix_at(k)[i], snapshot)
    g = problem.objectives[i].subgradient(v)
    z = outer_step(v, g, cfg.gamma(k, problem.D), problem.domain)
    x, steps, tr = inner_descent(z, k, problem, cfg, constraint, node=i, trace=trace)
    ns = time.perf_counter_ns() - t0 if cfg.timing else 0
    return x, RoundTrace(v, z, steps, x, ns, tr)


# --- full run -------------------------------------------------------------------

def initial_points(problem: SipProblem, cfg: SolverConfig) -> np.ndarray:
    V, n, X = problem.V, problem.n, problem.domain
    if cfg.init == "zeros":
        pts = np.tile(X.project(np.zeros(n)), (V, 1))
    elif cfg.init == "uniform":
        pts = X.sample(np.random.default_rng(cfg.seed), V)
    else:
        arr = np.asarray(cfg.x_init, dtype=float)
        if arr.ndim == 1:
            arr = np.tile(arr, (V, 1))
        if arr.shape != (V, n):
            raise ValueError(f"x_init must have shape ({n},) or ({V}, {n}), got {arr.shape}")
        if not all(X.contains(p, 1e-12) for p in arr):
            raise ValueError("x_init points must lie in the domain")
        pts = arr
    return np.array(pts, dtype=float)


@dataclass
class RunResult:
    x_bar: np.ndarray            # (V, n) returned tail averages
    iterates: np.ndarray         # (K + 1, V, n): row 0 is x_1, row k is x_{k+1}
    inner_steps: np.ndarray      # (K, V)
    node_ns: np.ndarray          # (K, V)
    repair_steps: np.ndarray     # (V,)
    config: SolverConfig
    traces: list | None = None
    metrics: object = None

    def __iter__(self):
        yield self.x_bar
        yield self.metrics


def run(
    problem: SipProblem,
    graph: TimeVaryingGraph,
    cfg: SolverConfig,
    node_constraints: Sequence[SemiInfiniteConstraint] | None = None,
    metrics: bool = True,
    keep_traces: bool = False,
    method: str = "dagd",
    run_id: str = "run",
) -> RunResult:
    """Run ``K`` synchronous rounds; returns tail averages plus the per-round record.

    ``node_constraints`` replaces the constraint used inside node ``i``'s inner
    loop (the scenario baseline); measured violations always use the
    problem's own constraint.
    """
    V, n, K = problem.V, problem.n, cfg.K
    if graph.V != V:
        raise ValueError(f"graph has {graph.V} nodes but the problem has {V} objectives")
    cons = list(node_constraints) if node_constraints is not None else [problem.constraint] * V
    if len(cons) != V:
        raise ValueError("need one constraint per node")

    x = initial_points(problem, cfg)
    repair = np.zeros(V, dtype=int)
    for i in range(V):
        if cfg.initial_repair:
            x[i], repair[i], _ = inner_descent(x[i], 0, problem, cfg, cons[i], node=i)
        else:
            val = cons[i].maximize(x[i])[1]
            if val > cfg.eps(1):
                raise InfeasibleStartError(
                    f"initial estimate of node {i} violates the constraint by {val:.6g} > eps_1 = "
                    f"{cfg.eps(1):.6g}; enable initial_repair or choose a feasible start")

    iterates = np.empty((K + 1, V, n))
    iterates[0] = x
    steps = np.zeros((K, V), dtype=np.int64)
    ns = np.zeros((K, V), dtype=np.int64)
    traces = [] if keep_traces else None
    acc = np.zeros((V, n))
    wsum = 0.0
    t0 = cfg.tail_start()

    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for k in range(1, K + 1):
            snap = iterates[k - 1]
            snap.setflags(write=False)

            def work(i, k=k, snap=snap):
                return node_round(i, k, snap, graph, problem, cfg, cons[i], keep_traces)

            outs = list(pool.map(work, range(V))) if pool else [work(i) for i in range(V)]
            for i, (xi, tr) in enumerate(outs):
                iterates[k, i] = xi
                steps[k - 1, i] = tr.steps
                ns[k - 1, i] = tr.ns
            if traces is not None:
                traces.append([tr for _, tr in outs])
            if k >= t0:
                gk = cfg.gamma(k, problem.D)
                acc += gk * iterates[k]
                wsum += gk
    finally:
        if pool:
            pool.shutdown()
    iterates.setflags(write=True)

    res = RunResult(acc / wsum, iterates, steps, ns, repair, cfg, traces)
    if metrics:
        from .analysis import collect_metrics
        res.metrics = collect_metrics(problem, res, method=method, run_id=run_id)
    return res
