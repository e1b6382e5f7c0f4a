"""Run metrics, closed-form guarantees and independent reference oracles."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .graph import TimeVaryingGraph, transition_decay_bound, transition_product
from .problem import SemiInfiniteConstraint, SipProblem, TerminalSetConstraint
from .problem.domain import ProblemError
from .problem.search import bounded_max

if TYPE_CHECKING:
    from .solver import RunResult, SolverConfig

LN2 = math.log(2.0)
VERIFY_FACTOR = 4
CSV_HEADER = ("run_id", "method", "k", "node", "objective", "violation",
              "consensus_err", "inner_steps", "node_round_ns")


def fmt(x: float) -> str:
    return "%.17g" % x


# --- independent violation oracle -------------------------------------------------

def verification_resolution(c: SemiInfiniteConstraint, factor: int = VERIFY_FACTOR) -> int:
    """Grid with ``factor`` times finer spacing than the maximizer's nominal grid."""
    return factor * (c.resolution - 1) + 1


def grid_gap(c: SemiInfiniteConstraint) -> float:
    """How far a correct solver maximizer may sit below a finer grid's max."""
    if c.strategy in ("analytic", "finite") or c.lipschitz_u is None:
        return 0.0
    return float(c.lipschitz_u * np.linalg.norm(c.index_set.spacing(c.resolution)) / 2.0)


def violation_oracle_batch(c: SemiInfiniteConstraint, xs: np.ndarray,
                           factor: int = VERIFY_FACTOR, chunk: int = 64) -> np.ndarray:
    """``max_u f(x, u)`` for each row of ``xs`` by brute force.

    Finite index sets are enumerated exactly. Otherwise the max is taken over
    a grid ``factor`` times finer than the maximizer's, with a bounded scalar
    polish for scalar index sets.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    pts = c.finite_points
    if pts is not None:
        return np.concatenate([c.values_batch(xs[s:s + 4096], pts).max(axis=1)
                               for s in range(0, len(xs), 4096)])
    res = verification_resolution(c, factor)
    U = c.index_set
    if hasattr(c, "grid_max_batch"):
        return np.concatenate([c.grid_max_batch(xs[s:s + 65536], res)
                               for s in range(0, len(xs), 65536)])
    grid = U.grid(res)
    out = np.empty(len(xs))
    h = U.spacing(res)
    for s in range(0, len(xs), chunk):
        vals = c.grid_values_batch(xs[s:s + chunk], res)
        idx = np.argmax(vals, axis=1)
        for j, (x, i) in enumerate(zip(xs[s:s + chunk], idx)):
            best = float(vals[j, i])
            if U.dim == 1 and h[0] > 0:
                w = grid[i, 0]
                lo, hi = max(U.lower[0], w - h[0]), min(U.upper[0], w + h[0])
                _, v = bounded_max(lambda t, x=x: c.value(x, np.array([t])), lo, hi, tol=1e-10)
                best = max(best, v)
            out[s + j] = best
    return out


def violation_oracle(problem: SipProblem | SemiInfiniteConstraint, x: np.ndarray) -> float:
    c = problem.constraint if isinstance(problem, SipProblem) else problem
    return float(violation_oracle_batch(c, np.asarray(x, dtype=float)[None])[0])


# --- metrics -------------------------------------------------------------------------

@dataclass
class RunMetrics:
    run_id: str
    method: str
    objective: np.ndarray        # (K, V) F(x_{k+1}^i)
    violation: np.ndarray        # (K, V)
    consensus_err: np.ndarray    # (K, V) ||x_hat_{k+1} - x_{k+1}^i||
    inner_steps: np.ndarray      # (K, V)
    node_ns: np.ndarray          # (K, V)
    x_bar: np.ndarray            # (V, n)
    F_bar: np.ndarray            # (V,)
    violation_bar: np.ndarray    # (V,)

    @property
    def K(self) -> int:
        return self.objective.shape[0]

    @property
    def V(self) -> int:
        return self.objective.shape[1]

    def max_consensus(self) -> np.ndarray:
        return self.consensus_err.max(axis=1)

    def write_csv(self, fh, header: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(CSV_HEADER)
        for k in range(self.K):
            for i in range(self.V):
                w.writerow((self.run_id, self.method, k + 1, i, fmt(self.objective[k, i]),
                            fmt(self.violation[k, i]), fmt(self.consensus_err[k, i]),
                            int(self.inner_steps[k, i]), int(self.node_ns[k, i])))

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def consensus_errors(iterates: np.ndarray) -> np.ndarray:
    """``||mean_i x^i - x^j||`` per round and node; ``iterates`` is (K, V, n)."""
    x_hat = iterates.mean(axis=1, keepdims=True)
    return np.linalg.norm(iterates - x_hat, axis=2)


def collect_metrics(problem: SipProblem, res: "RunResult", method: str = "dagd",
                    run_id: str = "run") -> RunMetrics:
    its = res.iterates[1:]
    K, V, n = its.shape
    flat = its.reshape(K * V, n)
    obj = problem.total_value_batch(flat).reshape(K, V)
    viol = violation_oracle_batch(problem.constraint, flat).reshape(K, V)
    F_bar = problem.total_value_batch(res.x_bar)
    v_bar = violation_oracle_batch(problem.constraint, res.x_bar)
    return RunMetrics(run_id, method, obj, viol, consensus_errors(its), res.inner_steps,
                      res.node_ns, res.x_bar, np.asarray(F_bar), v_bar)


def average_estimate_metrics(problem: SipProblem, res: "RunResult") -> tuple[np.ndarray, np.ndarray]:
    """``F`` and true violation at the network average ``x_hat_{k+1}`` for every round."""
    x_hat = res.iterates[1:].mean(axis=1)
    return (np.asarray(problem.total_value_batch(x_hat)),
            violation_oracle_batch(problem.constraint, x_hat))


def cumulative_average_time(node_ns: np.ndarray) -> np.ndarray:
    """``T_bar^k = (1/k) sum_{s<=k} mean_i T_i^s`` in nanoseconds."""
    per_round = node_ns.mean(axis=1)
    return np.cumsum(per_round) / np.arange(1, len(per_round) + 1)


# --- closed-form guarantees ------------------------------------------------------------

def _outer_slack(s: int, problem: SipProblem, cfg: "SolverConfig") -> float:
    return 2.0 * cfg.gamma(s, problem.D) * problem.L_F + cfg.eps(s) / problem.G0


def consensus_bound(k: int, graph: TimeVaryingGraph, problem: SipProblem, cfg: "SolverConfig",
                    initial_norm_sum: float) -> float:
    """Disagreement bound ``b_k`` by direct summation."""
    if k < 1:
        raise ValueError("k must be >= 1")
    tc = graph.constants
    V = problem.V
    acc = sum(tc.beta ** (k - s - 1) * _outer_slack(s, problem, cfg) for s in range(1, k))
    return (V * tc.gamma * acc + tc.gamma * tc.beta ** (k - 1) * initial_norm_sum
            + 2.0 * _outer_slack(k, problem, cfg))


def consensus_bound_sequence(K: int, graph: TimeVaryingGraph, problem: SipProblem,
                             cfg: "SolverConfig", initial_norm_sum: float) -> np.ndarray:
    """``b_1..b_K`` via ``S_{k+1} = beta S_k + c_k`` (same values as the direct sum)."""
    tc = graph.constants
    V = problem.V
    out = np.empty(K)
    S = 0.0
    bpow = 1.0
    for k in range(1, K + 1):
        c = _outer_slack(k, problem, cfg)
        out[k - 1] = V * tc.gamma * S + tc.gamma * bpow * initial_norm_sum + 2.0 * c
        S = tc.beta * S + c
        bpow *= tc.beta
    return out


def pairwise_bound(b_k: float) -> float:
    return 2.0 * b_k


def feasibility_bound(K: int, D: float) -> float:
    if K < 2:
        raise ValueError("K must be >= 2")
    return 2.0 * D * LN2 / ((2.0 - math.sqrt(2.0)) * math.sqrt(K))


def inner_cap(k: int, problem: SipProblem, cfg: "SolverConfig") -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    rho = cfg.gamma(k, problem.D) * problem.L_F + cfg.eps(k) / problem.G0
    return problem.L_G ** 2 / cfg.eps(k + 1) ** 2 * rho ** 2


def uniform_inner_cap(problem: SipProblem, cfg: "SolverConfig") -> float:
    """Uniform cap; with ``c_gamma = c_eps = 1`` this is ``2 L_G^2 (D L_F + 1/G0)^2``."""
    return 2.0 * problem.L_G ** 2 * (cfg.c_gamma * problem.D * problem.L_F / cfg.c_eps
                                     + 1.0 / problem.G0) ** 2


def repair_cap(problem: SipProblem, cfg: "SolverConfig") -> float:
    """Initial-repair cap: Polyak steps from anywhere in X with tolerance ``eps_1``."""
    return problem.L_G ** 2 * problem.D ** 2 / cfg.eps(1) ** 2


@dataclass
class C1Terms:
    A: float
    E: float
    F: float
    G: float
    C: float
    D: float
    B: float
    value: float


def suboptimality_constant(problem: SipProblem, graph: TimeVaryingGraph, initial_norm_sum: float,
                           grad_bound: float | None = None) -> C1Terms:
    """Collect the constant terms of the tail-average suboptimality bound.

    ``grad_bound`` plays the role of the gradient bound in the first term;
    it defaults to ``L = max(L_F, L_G)``. Assumes the default stepsize and
    tolerance rules.
    """
    tc = graph.constants
    V, D, LF, G0 = problem.V, problem.D, problem.L_F, problem.G0
    Lg = problem.L if grad_bound is None else grad_bound
    one_b = 1.0 - tc.beta
    slack = 2.0 * D * LF + 1.0 / G0
    A = V * (D / 2.0 + Lg ** 2 * (D ** 2 + (1.0 + D * LF * G0) ** 2 / G0 ** 4) * LN2)
    E = V * D * tc.gamma / one_b * slack * (1.0 / one_b + 2.0 * LN2)
    F = tc.gamma * D / one_b * initial_norm_sum
    G = 4.0 * D * slack * LN2
    C = E + F + G
    Dt = 2.0 * (2.0 * D * D * LF + D / G0) * LN2
    B = 2.0 * LF * V * C + LF * V * Dt
    value = (A + B) / (D * (2.0 - math.sqrt(2.0)))
    return C1Terms(A, E, F, G, C, Dt, B, value)


@dataclass
class BoundReport:
    V: int
    D: float
    L_F: float
    L_G: float
    G0: float
    K: int
    Gamma: float
    beta: float
    uniform_cap: float
    max_inner_cap: float
    feasibility: float
    C1_L: float
    C1_LG: float
    b: np.ndarray = field(repr=False)

    @property
    def L(self) -> float:
        return max(self.L_F, self.L_G)

    @property
    def suboptimality(self) -> float:
        return self.C1_L / math.sqrt(self.K)

    def valid(self) -> bool:
        vals = [self.Gamma, self.beta, self.uniform_cap, self.max_inner_cap, self.feasibility,
                self.C1_L, self.C1_LG, *self.b]
        return all(math.isfinite(v) and v > 0 for v in vals)

    def to_text(self) -> str:
        lines = [
            f"V = {self.V}", f"D = {fmt(self.D)}", f"K = {self.K}",
            f"L_F = {fmt(self.L_F)}", f"L_G = {fmt(self.L_G)}", f"L = {fmt(self.L)}",
            f"G0 = {fmt(self.G0)}",
            f"Gamma = {fmt(self.Gamma)}", f"beta = {fmt(self.beta)}",
            f"inner_cap_uniform = {fmt(self.uniform_cap)}",
            f"inner_cap_max_per_round = {fmt(self.max_inner_cap)}",
            f"feasibility_bound = {fmt(self.feasibility)}",
            f"C1 (with L) = {fmt(self.C1_L)}",
            f"C1 (with L_G) = {fmt(self.C1_LG)}",
            f"suboptimality_bound C1/sqrt(K) = {fmt(self.suboptimality)}",
            f"consensus_bound b_1 = {fmt(self.b[0])}",
            f"consensus_bound b_K = {fmt(self.b[-1])}",
        ]
        return "\n".join(lines) + "\n"


def bound_report(problem: SipProblem, graph: TimeVaryingGraph, cfg: "SolverConfig",
                 x1: np.ndarray) -> BoundReport:
    N = float(np.linalg.norm(np.atleast_2d(x1), axis=1).sum())
    tc = graph.constants
    caps = [inner_cap(k, problem, cfg) for k in (1, 2)]  # per-round cap is largest early on
    return BoundReport(
        problem.V, problem.D, problem.L_F, problem.L_G, problem.G0, cfg.K, tc.gamma, tc.beta,
        uniform_inner_cap(problem, cfg), max(caps), feasibility_bound(cfg.K, problem.D),
        suboptimality_constant(problem, graph, N).value,
        suboptimality_constant(problem, graph, N, grad_bound=problem.L_G).value,
        consensus_bound_sequence(cfg.K, graph, problem, cfg, N),
    )


# --- transition products -----------------------------------------------------------------

def transition_bound_check(graph: TimeVaryingGraph, rng: np.random.Generator, pairs: int = 100,
                           max_gap: int = 500, max_t: int = 2000) -> list[tuple[int, int, float, float]]:
    """``(t, s, max |Phi_ij - 1/V|, Gamma beta^(t-s))`` for random pairs with ``t > s``."""
    out = []
    tc = graph.constants
    for _ in range(pairs):
        gap = int(rng.integers(1, max_gap + 1))
        s = int(rng.integers(1, max_t - gap + 1))
        t = s + gap
        phi = transition_product(graph, t, s)
        out.append((t, s, float(np.abs(phi - 1.0 / graph.V).max()),
                    transition_decay_bound(tc, t, s)))
    return out


# --- reference solutions -------------------------------------------------------------------

@dataclass
class Reference:
    x: np.ndarray
    value: float
    mode: str
    violation: float


def _lattice(lower, upper, res):
    axes = [np.linspace(lo, hi, res) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _grid_best(problem: SipProblem, lower, upper, res: int, chunk: int = 250_000):
    pts = _lattice(lower, upper, res)
    best_val, best_x = math.inf, None
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        feas = violation_oracle_batch(problem.constraint, p) <= 0.0
        if not feas.any():
            continue
        vals = np.where(feas, problem.total_value_batch(p), np.inf)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_x = float(vals[j]), p[j].copy()
    return best_x, best_val


def centralized_reference(problem: SipProblem, mode: str = "grid", resolution: int = 2001,
                          zoom_levels: int = 2, iterations: int = 200_000) -> Reference:
    """Brute-force lattice search (``grid``) or a long single-node run (``algorithm``)."""
    if mode == "grid":
        n = problem.n
        if n > 4:
            raise ProblemError(f"grid reference supports dimension <= 4 (got {n}); "
                               "use mode 'algorithm' instead")
        if resolution ** n > 5e7:
            raise ProblemError(f"lattice with {resolution}^{n} points is too large; lower the resolution")
        X = problem.domain
        if hasattr(X, "lower"):
            lo, hi = X.lower, X.upper
        else:
            lo, hi = X.center - X.radius, X.center + X.radius
        x, val = _grid_best(problem, lo, hi, resolution)
        if x is None:
            raise ProblemError("no feasible lattice point found")
        h = (hi - lo) / (resolution - 1)
        for _ in range(zoom_levels):
            zlo, zhi = np.maximum(lo, x - 2 * h), np.minimum(hi, x + 2 * h)
            zres = min(resolution, 401)
            xz, vz = _grid_best(problem, zlo, zhi, zres)
            if xz is not None and vz <= val:
                x, val = xz, vz
            h = (zhi - zlo) / (zres - 1)
        return Reference(x, val, "grid", violation_oracle(problem, x))
    if mode == "algorithm":
        from .solver import SolverConfig, run
        # minimize F/V: a full-sum objective would take V-times larger steps
        central = problem.centralized(average=True)
        graph = TimeVaryingGraph.from_matrices([np.eye(1)], eta=0.5, B=1, kind="single")
        res = run(central, graph, SolverConfig(K=iterations), metrics=False)
        x = res.x_bar[0]
        return Reference(x, problem.total_value(x), "algorithm", violation_oracle(problem, x))
    raise ValueError(f"unknown reference mode {mode!r}; expected 'grid' or 'algorithm'")


# --- meta-control certification -------------------------------------------------------------

@dataclass
class Certification:
    w: np.ndarray
    terminal_norm_sq: np.ndarray
    threshold: float

    @property
    def passes(self) -> np.ndarray:
        return self.terminal_norm_sq <= self.threshold

    @property
    def passed(self) -> bool:
        return bool(self.passes.all())

    @property
    def max_norm_sq(self) -> float:
        return float(self.terminal_norm_sq.max()) if self.w.size else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(("sample_index", "w", "terminal_norm_sq", "pass"))
        for j, (w, v, p) in enumerate(zip(self.w, self.terminal_norm_sq, self.passes)):
            wr.writerow((j, fmt(w), fmt(v), "true" if p else "false"))
        return buf.getvalue()

    def summary(self) -> str:
        if not self.w.size:
            return "certification: 0 samples (vacuous pass)"
        return (f"certification: {int(self.passes.sum())}/{self.w.size} samples within "
                f"{fmt(self.threshold)}; max terminal norm^2 = {fmt(self.max_norm_sq)} -> "
                f"{'PASS' if self.passed else 'FAIL'}")


def metacontrol_certify(u_vec: np.ndarray, problem: SipProblem, samples: int = 1000, seed: int = 0,
                        tolerance: float = 0.0) -> Certification:
    """Simulate the uncertain system for ``samples`` uniform draws of ``w``."""
    c = problem.constraint
    if not isinstance(c, TerminalSetConstraint):
        raise ProblemError("certification needs the terminal-set constraint of meta_control")
    u_vec = np.asarray(u_vec, dtype=float)
    if u_vec.shape != (c.T,):
        raise ProblemError(f"control vector must have {c.T} entries, got {u_vec.size}")
    ws = np.random.default_rng(seed).uniform(c.index_set.lower[0], c.index_set.upper[0], samples)
    norms = np.empty(samples)
    for j, w in enumerate(ws):
        A = c.A0 + w * c.A1
        x = c.x0.copy()
        for ut in u_vec:
            x = A @ x + c.B * ut
        norms[j] = x @ x
    return Certification(ws, norms, c.level + tolerance)
