"""Semi-infinite constraints ``f(x, u) <= 0 for all u in U`` and their maximizers."""

from __future__ import annotations

import numpy as np

from .domain import IndexSet, ProblemError
from .search import bounded_max

STRATEGIES = ("analytic", "grid", "grid+refine", "finite")


class SemiInfiniteConstraint:
    """Base class: subclasses supply ``value``, ``grad_x`` and ``values``.

    ``maximize`` dispatches on ``strategy``. Grid ties go to the
    lexicographically-first grid point; ``grid+refine`` then runs a
    bounded scalar search per coordinate inside the winner's neighbouring
    cells and keeps whichever value is larger.
    """

    def __init__(
        self,
        index_set: IndexSet,
        strategy: str,
        resolution: int,
        L_G: float,
        G0: float,
        lipschitz_u: float | None = None,
        refine_tol: float = 1e-8,
    ):
        if strategy not in STRATEGIES:
            raise ProblemError(f"unknown maximizer strategy {strategy!r}; expected one of {STRATEGIES}")
        if strategy in ("grid", "grid+refine") and resolution < 2:
            raise ProblemError(f"grid resolution must be >= 2 points per dimension, got {resolution}")
        if not G0 > 0:
            raise ProblemError(f"G0 must be positive, got {G0}")
        self.index_set = index_set
        self.strategy = strategy
        self.resolution = int(resolution)
        self.L_G = float(L_G)
        self.G0 = float(G0)
        self.lipschitz_u = lipschitz_u
        self.refine_tol = refine_tol

    # oracles -----------------------------------------------------------
    def value(self, x: np.ndarray, u: np.ndarray) -> float:
        raise NotImplementedError

    def grad_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values(self, x: np.ndarray, us: np.ndarray) -> np.ndarray:
        return np.array([self.value(x, u) for u in us])

    def grid_values(self, x: np.ndarray, resolution: int) -> np.ndarray:
        return self.values(x, self.index_set.grid(resolution))

    def grid_values_batch(self, xs: np.ndarray, resolution: int) -> np.ndarray:
        return np.stack([self.grid_values(x, resolution) for x in xs])

    def values_batch(self, xs: np.ndarray, us: np.ndarray) -> np.ndarray:
        """``f(x, u)`` for every pair in ``xs x us``; shape (len(xs), len(us))."""
        return np.stack([self.values(x, us) for x in xs])

    def analytic_maximizer(self, x: np.ndarray) -> np.ndarray:
        raise ProblemError(f"{type(self).__name__} has no analytic maximizer")

    @property
    def finite_points(self) -> np.ndarray | None:
        return None

    # maximization --------------------------------------------------------
    def maximize(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        if self.strategy == "analytic":
            u = self.analytic_maximizer(x)
            return u, self.value(x, u)
        grid = self.index_set.grid(self.resolution)
        vals = self.grid_values(x, self.resolution)
        j = int(np.argmax(vals))
        u, best = grid[j].copy(), float(vals[j])
        if self.strategy == "grid+refine":
            u, best = refine_coordinates(self, x, u, best, self.index_set.spacing(self.resolution),
                                         self.refine_tol)
        return u, best


def refine_coordinates(c, x, u, best, spacing, tol):
    """One bounded-search sweep over the coordinates of ``u``."""
    U = c.index_set
    for d in range(u.size):
        lo = max(U.lower[d], u[d] - spacing[d])
        hi = min(U.upper[d], u[d] + spacing[d])
        if hi - lo <= 0:
            continue
        probe = u.copy()

        def f(t, d=d, probe=probe):
            probe[d] = t
            return c.value(x, probe)

        t, val = bounded_max(f, lo, hi, tol=tol)
        if val > best:
            u = u.copy()
            u[d] = t
            best = val
    return u, best


class PowerFeatureConstraint(SemiInfiniteConstraint):
    """``f(x, u) = sum_j u_j * x[idx_j] ** p_j - offset`` (affine in ``u``).

    Convex in ``x`` when every even-power coefficient range is nonnegative.
    The analytic maximizer picks, per coordinate, the upper bound when the
    feature is nonnegative and the lower bound otherwise.
    """

    def __init__(self, index_set: IndexSet, idx, powers, offset: float, **kw):
        self.idx = np.asarray(idx, dtype=int)
        self.powers = np.asarray(powers, dtype=float)
        if self.idx.size != index_set.dim or self.powers.size != index_set.dim:
            raise ProblemError("need one feature per index-set coordinate")
        for j, p in enumerate(self.powers):
            if p != 1 and index_set.lower[j] < 0:
                raise ProblemError("non-affine features need nonnegative coefficients for convexity")
        self.offset = float(offset)
        super().__init__(index_set, **kw)

    def features(self, x: np.ndarray) -> np.ndarray:
        return x[..., self.idx] ** self.powers

    def value(self, x, u):
        return float(u @ self.features(x) - self.offset)

    def values(self, x, us):
        return us @ self.features(x) - self.offset

    def grid_values_batch(self, xs, resolution):
        return self.features(xs) @ self.index_set.grid(resolution).T - self.offset

    def values_batch(self, xs, us):
        return self.features(xs) @ np.asarray(us).T - self.offset

    def grid_max_batch(self, xs, resolution):
        """Exact max over the full product grid, one axis at a time (f is separable in u)."""
        feats = self.features(np.atleast_2d(xs))
        total = np.full(feats.shape[0], -self.offset)
        for j, axis in enumerate(self.index_set.axes(resolution)):
            total += np.max(feats[:, j, None] * axis[None, :], axis=1)
        return total

    def grad_x(self, x, u):
        g = np.zeros_like(x, dtype=float)
        np.add.at(g, self.idx, u * self.powers * x[self.idx] ** (self.powers - 1))
        return g

    def analytic_maximizer(self, x):
        U = self.index_set
        return np.where(self.features(x) >= 0, U.upper, U.lower)

    def exact_bounds(self, X) -> tuple[float, float]:
        """``(max ||grad_x f||, max ||grad_u f||)`` over corners of ``X x U``.

        Each gradient component is monotone in |x_i| and |u_j|, so the box
        corners attain the maximum.
        """
        lg = lu = 0.0
        for x in X.corners():
            lu = max(lu, float(np.linalg.norm(self.features(x))))
            for u in self.index_set.corners():
                lg = max(lg, float(np.linalg.norm(self.grad_x(x, u))))
        return lg, lu


class TerminalSetConstraint(SemiInfiniteConstraint):
    """``f(v, w) = ||x_T(v, w)||^2 - level`` for ``x_{t+1} = A(w) x_t + B v_t``.

    ``A(w) = A0 + w * A1`` with a two-dimensional state. ``x_T`` equals
    ``A(w)^T x0 + sum_t A(w)^(T-1-t) B v_t = M(w) v + r(w)``; grids use
    precomputed ``(M, r)`` stacks, off-grid queries simulate directly.
    """

    def __init__(self, index_set: IndexSet, A0, A1, B, x0, T: int, level: float, **kw):
        if index_set.dim != 1:
            raise ProblemError("TerminalSetConstraint takes a scalar parameter")
        self.A0 = np.asarray(A0, dtype=float)
        self.A1 = np.asarray(A1, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.x0 = np.asarray(x0, dtype=float)
        if self.A0.shape != (2, 2) or self.x0.shape != (2,):
            raise ProblemError("TerminalSetConstraint supports two-dimensional states only")
        self.T = int(T)
        self.level = float(level)
        self._maps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        super().__init__(index_set, **kw)

    def system(self, w: float) -> np.ndarray:
        return self.A0 + w * self.A1

    def _entries(self, w):
        return tuple((self.A0 + w * self.A1).ravel().tolist())

    def terminal_state(self, v, w: float) -> tuple[float, float]:
        a, b, c, d = self._entries(w)
        b0, b1 = self.B.tolist()
        s0, s1 = self.x0.tolist()
        for vt in (v.tolist() if isinstance(v, np.ndarray) else v):
            s0, s1 = a * s0 + b * s1 + b0 * vt, c * s0 + d * s1 + b1 * vt
        return s0, s1

    def maps(self, ws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Stacks ``M`` of shape (len(ws), 2, T) and ``r`` of shape (len(ws), 2)."""
        ws = np.asarray(ws, dtype=float)
        A = self.A0[None] + ws[:, None, None] * self.A1[None]
        M = np.empty((ws.size, 2, self.T))
        v = np.tile(self.B, (ws.size, 1))
        for j in range(self.T):
            M[:, :, self.T - 1 - j] = v
            v = np.einsum("wij,wj->wi", A, v)
        r = np.tile(self.x0, (ws.size, 1))
        for _ in range(self.T):
            r = np.einsum("wij,wj->wi", A, r)
        return M, r

    def grid_maps(self, resolution: int):
        if resolution not in self._maps:
            self._maps[resolution] = self.maps(self.index_set.grid(resolution)[:, 0])
        return self._maps[resolution]

    def value(self, x, u):
        s0, s1 = self.terminal_state(x, float(u[0]))
        return s0 * s0 + s1 * s1 - self.level

    def values(self, x, us):
        M, r = self.maps(np.asarray(us)[:, 0])
        y = M @ x + r
        return np.einsum("wi,wi->w", y, y) - self.level

    def grid_values(self, x, resolution):
        M, r = self.grid_maps(resolution)
        y = M @ x + r
        return np.einsum("wi,wi->w", y, y) - self.level

    def grid_values_batch(self, xs, resolution):
        M, r = self.grid_maps(resolution)
        return self._batch(M, r, xs)

    def values_batch(self, xs, us):
        M, r = self.maps(np.asarray(us)[:, 0])
        return self._batch(M, r, xs)

    def _batch(self, M, r, xs):
        y = np.einsum("wit,nt->nwi", M, np.atleast_2d(xs)) + r[None]
        return np.einsum("nwi,nwi->nw", y, y) - self.level

    def grad_x(self, x, u):
        w = float(u[0])
        s0, s1 = self.terminal_state(x, w)
        a, b, c, d = self._entries(w)
        b0, b1 = self.B.tolist()
        # adjoint: grad_t = 2 B' (A')^(T-1-t) x_T
        l0, l1 = 2.0 * s0, 2.0 * s1
        g = [0.0] * self.T
        for t in range(self.T - 1, -1, -1):
            g[t] = b0 * l0 + b1 * l1
            l0, l1 = a * l0 + c * l1, b * l0 + d * l1
        return np.array(g)

    def map_bounds(self, X, resolution: int) -> tuple[float, float]:
        """``(L_G, G0)`` bounds from singular values of ``M(w)`` over a grid of ``w``.

        On the zero level set ``||x_T|| = sqrt(level)`` so the gradient norm
        ``2 ||M' x_T||`` is at least ``2 sigma_min sqrt(level)``.
        """
        M, r = self.grid_maps(resolution)
        sv = np.linalg.svd(M, compute_uv=False)
        vmax = float(np.linalg.norm(np.maximum(np.abs(X.lower), np.abs(X.upper))))
        L_G = float(np.max(2.0 * sv[:, 0] * (sv[:, 0] * vmax + np.linalg.norm(r, axis=1))))
        G0 = float(np.min(2.0 * sv[:, -1] * np.sqrt(self.level)))
        return L_G, G0


class ScenarioConstraint(SemiInfiniteConstraint):
    """The finite-max variant: ``max`` runs over a fixed sample of indices."""

    def __init__(self, base: SemiInfiniteConstraint, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[0] < 1:
            raise ProblemError("scenario constraint needs at least one point")
        self.base = base
        self.points = points
        super().__init__(base.index_set, "finite", max(base.resolution, 2), base.L_G, base.G0,
                         base.lipschitz_u)

    @property
    def finite_points(self):
        return self.points

    def value(self, x, u):
        return self.base.value(x, u)

    def grad_x(self, x, u):
        return self.base.grad_x(x, u)

    def values(self, x, us):
        return self.base.values(x, us)

    def values_batch(self, xs, us):
        return self.base.values_batch(xs, us)

    def maximize(self, x):
        vals = self.base.values(x, self.points)
        j = int(np.argmax(vals))
        return self.points[j].copy(), float(vals[j])
