"""Compact convex domains and box-shaped constraint index sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ProblemError(ValueError):
    """Raised for malformed problem data or configuration."""


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ProblemError("box bounds must be 1-d arrays of equal length")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ProblemError("box bounds must be finite")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def project(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, self.lower, self.upper)

    def contains(self, p: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def corners(self) -> np.ndarray:
        n = self.dim
        bits = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
        return np.where(bits == 1, self.upper, self.lower)


@dataclass(frozen=True, eq=False)
class DomainBox(Box):
    """Box domain; needs nonempty interior."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.lower >= self.upper):
            raise ProblemError("domain box needs lower < upper in every coordinate")

    kind = "box"


@dataclass(frozen=True, eq=False)
class DomainBall:
    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))
        if not self.radius > 0:
            raise ProblemError(f"ball radius must be positive, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * float(self.radius)

    def project(self, p: np.ndarray) -> np.ndarray:
        d = p - self.center
        dist = np.linalg.norm(d)
        if dist <= self.radius:
            return p
        return self.center + (self.radius / dist) * d

    def contains(self, p: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.linalg.norm(p - self.center) <= self.radius + tol)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        g = rng.standard_normal((size, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(size, 1)) ** (1.0 / self.dim)
        return self.center + r * g


DomainSet = DomainBox | DomainBall


def project_domain(X: DomainSet, p: np.ndarray) -> np.ndarray:
    return X.project(np.asarray(p, dtype=float))


@dataclass(frozen=True, eq=False)
class IndexSet(Box):
    """Compact box of constraint indices; degenerate coordinates allowed."""

    _grids: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.lower > self.upper):
            raise ProblemError("index set needs lower <= upper in every coordinate")

    def axes(self, resolution: int) -> list[np.ndarray]:
        if resolution < 2:
            raise ProblemError(f"grid resolution must be >= 2 points per dimension, got {resolution}")
        return [np.linspace(lo, hi, resolution) for lo, hi in zip(self.lower, self.upper)]

    def grid(self, resolution: int) -> np.ndarray:
        """Uniform grid in lexicographic order (first coordinate varies slowest)."""
        if resolution not in self._grids:
            mesh = np.meshgrid(*self.axes(resolution), indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            pts.setflags(write=False)
            self._grids[resolution] = pts
        return self._grids[resolution]

    def spacing(self, resolution: int) -> np.ndarray:
        return (self.upper - self.lower) / (resolution - 1)
