"""Scalar search used to refine grid maximizers."""

from __future__ import annotations

from typing import Callable

from scipy.optimize import minimize_scalar


def bounded_max(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8, max_iter: int = 200
) -> tuple[float, float]:
    """Maximize ``f`` on ``[lo, hi]`` with bounded Brent search.

    Assumes ``f`` is unimodal on the bracket. The endpoints are evaluated too,
    so the result is never worse than either of them.
    """
    if hi < lo:
        lo, hi = hi, lo
    cands = [(lo, f(lo)), (hi, f(hi))]
    if hi - lo > tol:
        res = minimize_scalar(lambda t: -f(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": tol, "maxiter": max_iter})
        cands.append((float(res.x), -float(res.fun)))
    return max(cands, key=lambda c: c[1])
