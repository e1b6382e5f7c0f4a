"""The SIP problem container and the oracles the solver calls."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from .constraints import SemiInfiniteConstraint
from .domain import DomainSet, ProblemError
from .objectives import QuadAbsObjective, sum_quad_abs


class LocalObjective(Protocol):
    lipschitz: float

    def value(self, x: np.ndarray) -> float: ...

    def value_batch(self, xs: np.ndarray) -> np.ndarray: ...

    def subgradient(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class SumObjective:
    """``scale`` times a sum of objectives; ``lipschitz`` defaults to the scaled sum of bounds."""

    parts: tuple
    lipschitz: float = float("nan")
    scale: float = 1.0

    def __post_init__(self):
        if np.isnan(self.lipschitz):
            object.__setattr__(self, "lipschitz", self.scale * float(sum(p.lipschitz for p in self.parts)))

    def value(self, x):
        return self.scale * float(sum(p.value(x) for p in self.parts))

    def value_batch(self, xs):
        return self.scale * sum(p.value_batch(xs) for p in self.parts)

    def subgradient(self, x):
        return self.scale * sum(p.subgradient(x) for p in self.parts)


@dataclass(frozen=True, eq=False)
class SipProblem:
    name: str
    domain: DomainSet
    objectives: tuple
    constraint: SemiInfiniteConstraint
    L_F: float = float("nan")
    known_optimum: tuple[float, np.ndarray] | None = None
    interior_point: np.ndarray | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        if not self.objectives:
            raise ProblemError("problem needs at least one local objective")
        if np.isnan(self.L_F):
            object.__setattr__(self, "L_F", float(max(o.lipschitz for o in self.objectives)))
        if not self.L_F > 0:
            raise ProblemError(f"L_F must be positive, got {self.L_F}")

    @property
    def V(self) -> int:
        return len(self.objectives)

    @property
    def n(self) -> int:
        return self.domain.dim

    @property
    def D(self) -> float:
        return self.domain.diameter

    @property
    def L_G(self) -> float:
        return self.constraint.L_G

    @property
    def G0(self) -> float:
        return self.constraint.G0

    @property
    def L(self) -> float:
        return max(self.L_F, self.L_G)

    def total_value(self, x: np.ndarray) -> float:
        return float(sum(o.value(x) for o in self.objectives))

    def total_value_batch(self, xs: np.ndarray) -> np.ndarray:
        return sum(o.value_batch(xs) for o in self.objectives)

    def with_constraint(self, constraint: SemiInfiniteConstraint, name: str | None = None) -> "SipProblem":
        return SipProblem(name or self.name, self.domain, self.objectives, constraint, self.L_F,
                          self.known_optimum, self.interior_point, dict(self.params))

    def centralized(self, average: bool = False) -> "SipProblem":
        """Single-node version whose only objective is the sum of all local ones.

        With ``average`` the objective is divided by ``V``: same minimizers, but
        subgradients on the scale of one node's, so a run with the default
        stepsizes behaves like one node of the distributed method.
        """
        objs = self.objectives
        s = 1.0 / self.V if average else 1.0
        if all(isinstance(o, QuadAbsObjective) for o in objs):
            m = sum_quad_abs(list(objs))
            merged = QuadAbsObjective(m.center, s * m.weight, s * m.abs_weight, m.abs_dir, m.target,
                                      s * m.offset)
            merged = merged.with_lipschitz(merged.max_subgradient_norm(self.domain))
        else:
            merged = SumObjective(tuple(objs), scale=s)
        return SipProblem(self.name + ":central", self.domain, (merged,), self.constraint,
                          float("nan"), self.known_optimum, self.interior_point, dict(self.params))


def subgradient_sum(problem: SipProblem, x: np.ndarray) -> np.ndarray:
    return sum(o.subgradient(x) for o in problem.objectives)


def inner_maximize(constraint: SemiInfiniteConstraint, x: np.ndarray) -> tuple[np.ndarray, float]:
    return constraint.maximize(np.asarray(x, dtype=float))


def fd_gradient(fun, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x, dtype=float)
    e = np.zeros_like(x, dtype=float)
    for j in range(x.size):
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
        e[j] = 0.0
    return g


def _rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


@dataclass
class OracleCheck:
    name: str
    max_convexity_violation: float
    max_norm_excess: float
    max_fd_rel_err: float
    fd_tol: float = 1e-5
    convexity_tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return (self.max_convexity_violation <= self.convexity_tol
                and self.max_norm_excess <= 1e-9
                and self.max_fd_rel_err <= self.fd_tol)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: convexity {self.max_convexity_violation:.2e}, "
                f"bound excess {self.max_norm_excess:.2e}, fd rel err {self.max_fd_rel_err:.2e} -> {verdict}")


def check_objective(obj, X: DomainSet, rng: np.random.Generator, samples: int = 100,
                    name: str = "objective", kink_margin: float = 1e-3,
                    fd_samples: int | None = None) -> OracleCheck:
    """Subgradient inequality, bound and finite-difference agreement on random pairs.

    Finite differences run on the first ``fd_samples`` points (all by default).
    """
    xs, ys = X.sample(rng, samples), X.sample(rng, samples)
    conv = excess = fd = 0.0
    for j, (x, y) in enumerate(zip(xs, ys)):
        g = obj.subgradient(x)
        conv = max(conv, float(g @ (y - x) - (obj.value(y) - obj.value(x))))
        excess = max(excess, float(np.linalg.norm(g)) - obj.lipschitz)
        if fd_samples is not None and j >= fd_samples:
            continue
        if hasattr(obj, "kink_distance") and obj.kink_distance(x) < kink_margin:
            continue
        h = 1e-6 * max(1.0, float(np.abs(x).max()))
        fd = max(fd, _rel_err(g, fd_gradient(obj.value, x, h)))
    return OracleCheck(name, conv, excess, fd)


def check_constraint(c: SemiInfiniteConstraint, X: DomainSet, rng: np.random.Generator,
                     samples: int = 100, name: str = "constraint",
                     fd_samples: int | None = None) -> OracleCheck:
    """Convexity in x for fixed u, gradient bound ``L_G`` and finite differences."""
    xs, ys = X.sample(rng, samples), X.sample(rng, samples)
    us = c.index_set.sample(rng, samples)
    conv = excess = fd = 0.0
    for j, (x, y, u) in enumerate(zip(xs, ys, us)):
        g = c.grad_x(x, u)
        conv = max(conv, float(c.value(x, u) + g @ (y - x) - c.value(y, u)))
        excess = max(excess, float(np.linalg.norm(g)) - c.L_G)
        if fd_samples is not None and j >= fd_samples:
            continue
        h = 1e-6 * max(1.0, float(np.abs(x).max()))
        fd = max(fd, _rel_err(g, fd_gradient(lambda z: c.value(z, u), x, h)))
    return OracleCheck(name, conv, excess, fd)


def max_violation(c: SemiInfiniteConstraint, x: np.ndarray) -> float:
    return c.maximize(x)[1]


def find_interior_point(problem: SipProblem, margin: float = 0.1, max_steps: int = 10_000) -> np.ndarray:
    """Polyak descent on ``max_u f + margin`` from the domain's centre-ish start."""
    if problem.interior_point is not None:
        return np.asarray(problem.interior_point, dtype=float)
    X = problem.domain
    x = X.project(np.zeros(problem.n))
    c = problem.constraint
    for _ in range(max_steps):
        u, val = c.maximize(x)
        if val < -margin:
            return x
        g = c.grad_x(x, u)
        gg = float(g @ g)
        if gg <= 1e-18:
            break
        x = X.project(x - (val + 2 * margin) / gg * g)
    raise ProblemError("could not locate a strictly feasible point")


@dataclass
class G0Estimate:
    estimate: float
    configured: float
    points: int
    delta: float

    def line(self) -> str:
        flag = "" if self.points == 0 or self.estimate >= self.configured else "  (configured G0 exceeds the sampled minimum)"
        return (f"G0 estimate: min gradient norm {self.estimate:.6g} over {self.points} points "
                f"with |max f| <= {self.delta}; configured G0 = {self.configured:.6g}{flag}")


def estimate_g0(problem: SipProblem, rng: np.random.Generator, samples: int = 200,
                delta: float = 0.05) -> G0Estimate:
    """Minimum ``||grad_x f(x, u*(x))||`` over sampled points near the zero level set.

    Uniform samples rarely land in the band ``|max_u f| <= delta``, so each
    infeasible sample is also pulled onto the level set by bisection along
    the segment towards a strictly feasible point. Diagnostic only.
    """
    c = problem.constraint
    x_in = find_interior_point(problem)
    best, count = np.inf, 0
    for x in problem.domain.sample(rng, samples):
        u, val = c.maximize(x)
        if abs(val) > delta and val > 0:
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                _, vm = c.maximize(x_in + mid * (x - x_in))
                if vm > 0:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-12:
                    break
            x = x_in + hi * (x - x_in)
            u, val = c.maximize(x)
        if abs(val) <= delta:
            count += 1
            best = min(best, float(np.linalg.norm(c.grad_x(x, u))))
    return G0Estimate(float(best) if count else float("nan"), problem.G0, count, delta)


def sampled_index_lipschitz(c: SemiInfiniteConstraint, xs: Sequence[np.ndarray], resolution: int) -> float:
    """Largest slope of ``f(x, .)`` between neighbouring grid points along any axis."""
    U = c.index_set
    shape = (resolution,) * U.dim
    h = U.spacing(resolution)
    best = 0.0
    for x in xs:
        vals = c.grid_values(np.asarray(x, dtype=float), resolution).reshape(shape)
        for d in range(U.dim):
            if h[d] > 0:
                best = max(best, float(np.abs(np.diff(vals, axis=d)).max() / h[d]))
    return best
