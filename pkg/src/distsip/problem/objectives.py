"""Local objective functions with subgradient oracles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import DomainBox, ProblemError


@dataclass(frozen=True, eq=False)
class QuadAbsObjective:
    """``weight * ||x - center||^2 + abs_weight * |<a, x> - target| - offset``.

    At the kink the subgradient takes the zero element of the ``|.|`` term.
    """

    center: np.ndarray
    weight: float
    abs_weight: float
    abs_dir: np.ndarray
    target: float
    offset: float
    lipschitz: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "abs_dir", np.asarray(self.abs_dir, dtype=float))
        if self.weight < 0 or self.abs_weight < 0:
            raise ProblemError("QuadAbsObjective weights must be nonnegative (convexity)")

    def value(self, x: np.ndarray) -> float:
        d = x - self.center
        return float(self.weight * (d @ d) + self.abs_weight * abs(self.abs_dir @ x - self.target) - self.offset)

    def value_batch(self, xs: np.ndarray) -> np.ndarray:
        d = xs - self.center
        return (self.weight * np.einsum("ij,ij->i", d, d)
                + self.abs_weight * np.abs(xs @ self.abs_dir - self.target) - self.offset)

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        s = np.sign(self.abs_dir @ x - self.target)
        return 2.0 * self.weight * (x - self.center) + (self.abs_weight * s) * self.abs_dir

    def kink_distance(self, x: np.ndarray) -> float:
        return abs(self.abs_dir @ x - self.target) / np.linalg.norm(self.abs_dir)

    def with_lipschitz(self, L: float) -> "QuadAbsObjective":
        return QuadAbsObjective(self.center, self.weight, self.abs_weight, self.abs_dir,
                                self.target, self.offset, float(L))

    def max_subgradient_norm(self, X: DomainBox) -> float:
        """Exact max of the subgradient norm over a box.

        On each side of the kink hyperplane the subgradient is affine, so its
        norm peaks at a vertex of (box ∩ half-space): box corners plus the
        points where the hyperplane crosses box edges.
        """
        corners = X.corners()
        a, t = self.abs_dir, self.target
        crossings = []
        n = X.dim
        for c in corners:
            for j in range(n):
                if c[j] != X.lower[j] or a[j] == 0:
                    continue
                rest = a @ c - a[j] * c[j]
                xj = (t - rest) / a[j]
                if X.lower[j] <= xj <= X.upper[j]:
                    p = c.copy()
                    p[j] = xj
                    crossings.append(p)
        best = 0.0
        for s in (-1.0, 0.0, 1.0):
            pts = [c for c in corners if np.sign(a @ c - t) in (s, 0)] + crossings
            for p in pts:
                g = 2.0 * self.weight * (p - self.center) + (self.abs_weight * s) * a
                best = max(best, float(np.linalg.norm(g)))
        return best


def sum_quad_abs(objs: list[QuadAbsObjective]) -> QuadAbsObjective:
    """Collapse a list of QuadAbs terms sharing the kink hyperplane into one."""
    a, t = objs[0].abs_dir, objs[0].target
    for o in objs:
        if not (np.allclose(o.abs_dir, a) and o.target == t):
            raise ProblemError("can only merge QuadAbs terms with a common kink hyperplane")
    w = sum(o.weight for o in objs)
    center = sum(o.weight * o.center for o in objs) / w
    const = sum(o.weight * (o.center @ o.center) - o.offset for o in objs) - w * (center @ center)
    return QuadAbsObjective(center, w, sum(o.abs_weight for o in objs), a, t, -const)


@dataclass(frozen=True, eq=False)
class LinearQuadraticObjective:
    """Finite-horizon LQ cost of an open-loop input sequence.

    Cost is ``x_T' P x_T + sum_{t<T} (x_t' Q x_t + R u_t^2)`` along
    ``x_{t+1} = A x_t + B u_t`` from ``x0``; the gradient comes from the
    backward adjoint recursion.
    """

    A: np.ndarray
    B: np.ndarray
    x0: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    R: float
    T: int
    lipschitz: float = float("nan")
    _quad: tuple = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("A", "B", "x0", "Q", "P"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def simulate(self, u: np.ndarray) -> np.ndarray:
        xs = np.empty((self.T + 1, self.x0.size))
        xs[0] = self.x0
        A, B = self.A, self.B
        for t in range(self.T):
            xs[t + 1] = A @ xs[t] + B * u[t]
        return xs

    def value(self, u: np.ndarray) -> float:
        xs = self.simulate(u)
        run = np.einsum("ti,ij,tj->", xs[:-1], self.Q, xs[:-1])
        return float(run + self.R * (u @ u) + xs[-1] @ self.P @ xs[-1])

    def value_batch(self, us: np.ndarray) -> np.ndarray:
        x = np.tile(self.x0, (us.shape[0], 1))
        total = self.R * np.einsum("ij,ij->i", us, us)
        for t in range(self.T):
            total += np.einsum("ni,ij,nj->n", x, self.Q, x)
            x = x @ self.A.T + np.outer(us[:, t], self.B)
        return total + np.einsum("ni,ij,nj->n", x, self.P, x)

    def subgradient(self, u: np.ndarray) -> np.ndarray:
        xs = self.simulate(u)
        grad = np.empty(self.T)
        lam = 2.0 * self.P @ xs[-1]
        At = self.A.T
        Q2 = 2.0 * self.Q
        for t in range(self.T - 1, -1, -1):
            grad[t] = 2.0 * self.R * u[t] + self.B @ lam
            lam = Q2 @ xs[t] + At @ lam
        return grad

    def quadratic_form(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Explicit ``(H, g, c)`` with cost ``u'Hu + 2g'u + c``."""
        if self._quad is None:
            n, T = self.x0.size, self.T
            G = np.zeros((n, T))
            x = self.x0.copy()
            H = self.R * np.eye(T)
            g = np.zeros(T)
            c = 0.0
            for t in range(T + 1):
                W = self.P if t == T else self.Q
                H += G.T @ W @ G
                g += G.T @ W @ x
                c += x @ W @ x
                if t < T:
                    G = self.A @ G
                    G[:, t] += self.B
                    x = self.A @ x
            object.__setattr__(self, "_quad", (H, g, float(c)))
        return self._quad

    def gradient_bound(self, X: DomainBox) -> float:
        """Upper bound on ``||grad||`` over the box: ``2 (||H|| max||u|| + ||g||)``."""
        H, g, _ = self.quadratic_form()
        umax = float(np.linalg.norm(np.maximum(np.abs(X.lower), np.abs(X.upper))))
        return 2.0 * (np.linalg.norm(H, 2) * umax + np.linalg.norm(g))

    def with_lipschitz(self, L: float) -> "LinearQuadraticObjective":
        return LinearQuadraticObjective(self.A, self.B, self.x0, self.Q, self.P, self.R, self.T,
                                        float(L), self._quad)
