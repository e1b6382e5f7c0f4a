"""Built-in problems: the 2-D benchmark, robust meta control, and a finite-index demo."""

from __future__ import annotations

import math
from typing import Any, Mapping

import numpy as np

from .constraints import PowerFeatureConstraint, ScenarioConstraint, TerminalSetConstraint
from .core import SipProblem, sampled_index_lipschitz
from .domain import DomainBox, IndexSet, ProblemError
from .objectives import LinearQuadraticObjective, QuadAbsObjective

NAMES = ("quad_abs_10", "meta_control", "finite_demo")

QUAD_A = (-2, 3, -3, -5, -1, 0, 4, 2, -4, 1)
QUAD_B = (2, -2, 3, 5, 1, 0, -1, -3, 4, -4)
QUAD_C = (7, 3, 5, 1, 9, 11, 10, 14, 2.5, 12.5)
QUAD_OPT_VALUE = -33.3732
QUAD_OPT_POINT = (0.53905, 1.09119)

META_W = (10.0, 12.0, 15.0, 20.0)
META_QR = (
    ((1.0, 2.0), 0.1),
    ((2.0, 1.5), 1.0),
    ((1.5, 2.0), 1.0),
    ((1.0, 1.0), 0.1),
)
META_A0 = ((1.0, 0.01), (0.0, 0.99))
META_A1 = ((0.0, 0.0), (-0.01, 0.0))
META_B = (0.0, 0.01)
META_X0 = (0.5, 0.0)
META_T = 100
META_LEVEL = 1.5
META_W_RANGE = (10.0, 20.0)

_ALLOWED = {
    "quad_abs_10": {"G0", "L_F", "L_G", "resolution", "strategy"},
    "meta_control": {"G0", "L_F", "L_G", "resolution", "strategy", "u_max"},
    "finite_demo": {"G0", "L_F", "L_G", "resolution", "scenario_count", "scenario_seed"},
}


def _check_keys(name: str, params: Mapping[str, Any]):
    extra = set(params) - _ALLOWED[name]
    if extra:
        raise ProblemError(f"unknown parameter(s) for {name}: {sorted(extra)}")


def _positive(params, key, default):
    val = params.get(key, default)
    if val is None:
        return default
    val = float(val)
    if not (math.isfinite(val) and val > 0):
        raise ProblemError(f"problem.{key} must be a positive number, got {val}")
    return val


def build_quad_abs(params: Mapping[str, Any]) -> SipProblem:
    X = DomainBox(np.full(2, -5.0), np.full(2, 5.0))
    objs = [
        QuadAbsObjective((a, b), 0.1, 1.0, (1.0, 1.0), 4.0, float(c))
        for a, b, c in zip(QUAD_A, QUAD_B, QUAD_C)
    ]
    objs = [o.with_lipschitz(o.max_subgradient_norm(X)) for o in objs]
    U = IndexSet((0.5, 1.0), (2.5, 3.0))
    probe = PowerFeatureConstraint(U, (0, 1), (2, 1), 4.0, strategy="grid", resolution=2,
                                   L_G=1.0, G0=1.0)
    L_G, L_u = probe.exact_bounds(X)
    c = PowerFeatureConstraint(
        U, (0, 1), (2, 1), 4.0,
        strategy=params.get("strategy", "analytic"),
        resolution=int(params.get("resolution", 101)),
        L_G=_positive(params, "L_G", L_G),
        # on the zero level set with x1 >= 0 the gradient (5 x0, 3) has norm >= 3;
        # with x1 < 0 feasibility forces 2.5 x0^2 >= 4 - x1 > 4, so the norm exceeds 6
        G0=_positive(params, "G0", 3.0),
        lipschitz_u=L_u,
    )
    L_F = params.get("L_F")
    return SipProblem(
        "quad_abs_10", X, objs, c,
        L_F=_positive(params, "L_F", float("nan")) if L_F is not None else float("nan"),
        known_optimum=(QUAD_OPT_VALUE, np.array(QUAD_OPT_POINT)),
        interior_point=np.zeros(2),
        params=dict(params),
    )


def build_meta_control(params: Mapping[str, Any]) -> SipProblem:
    u_max = _positive(params, "u_max", 10.0)
    X = DomainBox(np.full(META_T, -u_max), np.full(META_T, u_max))
    A0, A1 = np.array(META_A0), np.array(META_A1)
    objs = []
    for w, (qd, r) in zip(META_W, META_QR):
        Q = np.diag(qd)
        o = LinearQuadraticObjective(A0 + w * A1, META_B, META_X0, Q, Q, r, META_T)
        objs.append(o.with_lipschitz(o.gradient_bound(X)))
    U = IndexSet((META_W_RANGE[0],), (META_W_RANGE[1],))
    resolution = int(params.get("resolution", 2001))
    c = TerminalSetConstraint(U, A0, A1, META_B, META_X0, META_T, META_LEVEL,
                              strategy=params.get("strategy", "grid+refine"),
                              resolution=resolution, L_G=1.0, G0=1.0)
    L_G, G0 = c.map_bounds(X, resolution)
    c.L_G = _positive(params, "L_G", L_G)
    c.G0 = _positive(params, "G0", G0)
    rng = np.random.default_rng(12345)
    # random interior points plus random vertices of the box
    probes = np.vstack([np.zeros(META_T), X.sample(rng, 32), np.sign(X.sample(rng, 8)) * u_max])
    c.lipschitz_u = sampled_index_lipschitz(c, probes, resolution)
    L_F = params.get("L_F")
    return SipProblem(
        "meta_control", X, objs, c,
        L_F=_positive(params, "L_F", float("nan")) if L_F is not None else float("nan"),
        params=dict(params, u_max=u_max),
    )


def build_finite_demo(params: Mapping[str, Any]) -> SipProblem:
    base = build_quad_abs({k: v for k, v in params.items() if k in _ALLOWED["quad_abs_10"]})
    n = int(params.get("scenario_count", 200))
    if n < 1:
        raise ProblemError(f"problem.scenario_count must be >= 1, got {n}")
    seed = int(params.get("scenario_seed", 0))
    U = base.constraint.index_set
    points = np.random.default_rng(seed).uniform(U.lower, U.upper, size=(n, U.dim))
    p = base.with_constraint(ScenarioConstraint(base.constraint, points), name="finite_demo")
    p.params.update(scenario_count=n, scenario_seed=seed)
    return p


def catalog_build(name: str, params: Mapping[str, Any] | None = None) -> SipProblem:
    params = dict(params or {})
    if name not in NAMES:
        raise ProblemError(f"unknown problem {name!r}; expected one of {NAMES}")
    _check_keys(name, params)
    return {"quad_abs_10": build_quad_abs, "meta_control": build_meta_control,
            "finite_demo": build_finite_demo}[name](params)
