import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distsip.analysis import inner_cap, violation_oracle
from distsip.graph import TimeVaryingGraph, build_graph
from distsip.problem import (
    DomainBox,
    IndexSet,
    PowerFeatureConstraint,
    QuadAbsObjective,
    SipProblem,
    catalog_build,
)
from distsip.solver import (
    DegenerateGradientError,
    InfeasibleStartError,
    InnerLoopError,
    SolverConfig,
    ball_project,
    ball_radius,
    inner_descent,
    mix,
    node_round,
    outer_step,
    polyak_step,
    run,
)

BOX = DomainBox([-5, -5], [5, 5])


# --- elementary steps -------------------------------------------------------------

def test_mix_examples():
    est = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])
    np.testing.assert_allclose(mix(np.array([0, 1.0, 0]), est), [3, 0])
    np.testing.assert_allclose(mix(np.full(3, 1 / 3), est), [1, 1])
    np.testing.assert_allclose(mix(np.array([0.5, 0.5, 0]), np.array([[2.0, 0], [0, 2.0], [9, 9]])), [1, 1])
    with pytest.raises(ValueError):
        mix(np.array([0.5, 0.5]), est)


def test_outer_step_examples():
    v = np.array([0.3, -1.0])
    np.testing.assert_array_equal(outer_step(v, np.zeros(2), 2.0, BOX), v)
    np.testing.assert_array_equal(outer_step(np.array([5.0, 5.0]), np.array([-2.0, 0]), 1.0, BOX), [5, 5])
    np.testing.assert_allclose(outer_step(np.zeros(2), np.array([1.0, 2.0]), -1.0, BOX), [1, 2])
    np.testing.assert_allclose(outer_step(np.zeros(2), np.array([1.0, 2.0]), 1.0, BOX), [-1, -2])


def test_ball_project_examples():
    np.testing.assert_allclose(ball_project(np.zeros(2), 2.0, np.array([4.0, 0])), [2, 0])
    p = np.array([0.5, 0.5])
    assert ball_project(np.zeros(2), 1.0, p) is p
    np.testing.assert_allclose(ball_project(np.array([1.0, 1.0]), 1.0, np.array([1.0, 4.0])), [1, 2])


def test_polyak_step_examples():
    assert polyak_step(1.0, 4.0) == 0.25
    assert polyak_step(2.0, 1.0) == 2.0
    assert polyak_step(1e-3, 1e6) < polyak_step(2e-3, 1e6)
    with pytest.raises(DegenerateGradientError):
        polyak_step(1.0, 1e-19)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2), st.floats(1e-3, 10))
def test_ball_project_lands_in_ball(p, r):
    c = np.array([0.3, -0.2])
    q = ball_project(c, r, np.array(p))
    assert np.linalg.norm(q - c) <= r * (1 + 1e-12)


def test_solver_config_validation():
    for bad in (dict(K=1), dict(K=10, c_gamma=0), dict(K=10, cap_factor=0.5), dict(K=10, init="x"),
                dict(K=10, init="explicit"), dict(K=10, workers=0)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    cfg = SolverConfig(K=9)
    assert cfg.tail_start() == 4
    assert cfg.gamma(4, 10.0) == 5.0 and cfg.eps(4) == 0.5


# --- inner loop ---------------------------------------------------------------------

def test_inner_descent_feasible_start_is_noop(quad):
    z = np.array([0.1, 0.2])
    x, steps, _ = inner_descent(z, 5, quad, SolverConfig(K=10))
    assert steps == 0 and x is z


def test_inner_descent_respects_cap_and_ball(quad, rng):
    cfg = SolverConfig(K=1000)
    k = 100
    rho = ball_radius(k, quad, cfg)
    cap = math.ceil(inner_cap(k, quad, cfg))
    seen = 0
    step = cfg.gamma(k, quad.D) * quad.L_F
    for x0 in rng.uniform(-5, 5, (1500, 2)):
        # the loop only ever sees an outer step taken from an eps_k-feasible point
        if quad.constraint.maximize(x0)[1] > cfg.eps(k):
            continue
        d = rng.normal(size=2)
        z = quad.domain.project(x0 + rng.uniform(0, step) * d / np.linalg.norm(d))
        if quad.constraint.maximize(z)[1] <= cfg.eps(k + 1):
            continue
        x, steps, tr = inner_descent(z, k, quad, cfg, trace=True)
        seen += 1
        assert steps <= cap
        assert tr.max_dist <= rho + 1e-12
        assert quad.domain.contains(x)
        assert violation_oracle(quad, x) <= cfg.eps(k + 1) + 1e-12
    assert seen > 50


def test_inner_descent_finite_variant():
    p = catalog_build("finite_demo", {"scenario_count": 30, "scenario_seed": 4})
    cfg = SolverConfig(K=100)
    z = np.array([2.0, 2.0])
    x, steps, _ = inner_descent(z, 10, p, cfg)
    assert steps >= 1
    assert p.constraint.maximize(x)[1] <= cfg.eps(11)
    assert violation_oracle(p, x) <= cfg.eps(11)


def _degenerate_problem():
    # f(x, u) = u * x0^2 + 1 > 0 everywhere, and grad vanishes at x0 = 0
    c = PowerFeatureConstraint(IndexSet([1.0], [2.0]), [0], [2], -1.0, strategy="analytic",
                               resolution=2, L_G=10.0, G0=1.0)
    o = QuadAbsObjective((0, 0), 1.0, 0.0, (1, 0), 0.0, 0.0, lipschitz=30.0)
    return SipProblem("degenerate", DomainBox([-5, -5], [5, 5]), [o], c)


def test_degenerate_gradient_error_names_round():
    with pytest.raises(DegenerateGradientError) as e:
        inner_descent(np.zeros(2), 3, _degenerate_problem(), SolverConfig(K=10), node=1)
    assert e.value.k == 3 and e.value.node == 1


def test_cap_exceeded_error():
    p = catalog_build("quad_abs_10", {"L_G": 1e-3})
    with pytest.raises(InnerLoopError) as e:
        run(p, build_graph("static-cycle", 10), SolverConfig(K=50, cap_factor=1), metrics=False)
    assert e.value.k is not None and e.value.node is not None
    assert "G0" in str(e.value)


# --- node rounds and full runs ----------------------------------------------------------

def _zero_problem():
    c = PowerFeatureConstraint(IndexSet([1.0], [1.0]), [0], [1], 100.0, strategy="analytic",
                               resolution=2, L_G=1.0, G0=1.0)
    o = QuadAbsObjective((0.3, 0.4), 0.0, 0.0, (1, 0), 0.0, 0.0, lipschitz=1.0)
    return SipProblem("flat", DomainBox([-1, -1], [1, 1]), [o], c)


def test_node_round_identity_case():
    p = _zero_problem()
    g = TimeVaryingGraph.from_matrices([np.eye(1)], eta=0.5, B=1)
    x = np.array([[0.25, -0.5]])
    out, tr = node_round(0, 1, x, g, p, SolverConfig(K=5))
    np.testing.assert_array_equal(out, x[0])
    assert tr.steps == 0


def test_node_round_first_round_feasible(quad, cycle10):
    cfg = SolverConfig(K=100)
    snap = np.zeros((10, 2))
    for i in range(10):
        x, tr = node_round(i, 1, snap, cycle10, quad, cfg, trace=True)
        assert violation_oracle(quad, x) <= cfg.eps(2) + 1e-12
        # outer-step bound: ||v - z|| <= gamma_k ||g_i(v)||
        g = quad.objectives[i].subgradient(tr.v)
        assert np.linalg.norm(tr.v - tr.z) <= cfg.gamma(1, quad.D) * np.linalg.norm(g) + 1e-12


def test_node_round_symmetry():
    objs = [QuadAbsObjective((1, 1), 0.1, 1.0, (1, 1), 4.0, 0.0, lipschitz=5.0)] * 2
    base = catalog_build("quad_abs_10")
    p = SipProblem("twins", base.domain, objs, base.constraint)
    g = build_graph("static-line", 2)
    snap = np.array([[0.5, 0.5], [0.5, 0.5]])
    a, _ = node_round(0, 3, snap, g, p, SolverConfig(K=10))
    b, _ = node_round(1, 3, snap, g, p, SolverConfig(K=10))
    np.testing.assert_array_equal(a, b)


def test_run_tail_average_k2(quad, cycle10):
    cfg = SolverConfig(K=2)
    res = run(quad, cycle10, cfg, metrics=False)
    g1, g2 = cfg.gamma(1, quad.D), cfg.gamma(2, quad.D)
    expect = (g1 * res.iterates[1] + g2 * res.iterates[2]) / (g1 + g2)
    np.testing.assert_allclose(res.x_bar, expect, rtol=1e-15)


def test_tail_set_starts_at_half(quad, cycle10):
    cfg = SolverConfig(K=7)
    res = run(quad, cycle10, cfg, metrics=False)
    ks = range(3, 8)
    w = np.array([cfg.gamma(k, quad.D) for k in ks])
    expect = np.tensordot(w, res.iterates[3:8], axes=1) / w.sum()
    np.testing.assert_allclose(res.x_bar, expect, rtol=1e-14)


def test_infeasible_start_without_repair(quad, cycle10):
    cfg = SolverConfig(K=5, initial_repair=False, init="explicit", x_init=(5.0, 5.0))
    with pytest.raises(InfeasibleStartError):
        run(quad, cycle10, cfg)


def test_initial_repair_makes_start_feasible(quad, cycle10):
    cfg = SolverConfig(K=5, init="explicit", x_init=(5.0, 5.0))
    res = run(quad, cycle10, cfg, metrics=False)
    assert (res.repair_steps > 0).all()
    for x in res.iterates[0]:
        assert violation_oracle(quad, x) <= cfg.eps(1) + 1e-12


def test_uniform_init_is_seeded(quad, cycle10):
    a = run(quad, cycle10, SolverConfig(K=3, init="uniform", seed=5), metrics=False)
    b = run(quad, cycle10, SolverConfig(K=3, init="uniform", seed=5), metrics=False)
    c = run(quad, cycle10, SolverConfig(K=3, init="uniform", seed=6), metrics=False)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    assert not np.array_equal(a.iterates[0], c.iterates[0])


def test_graph_size_mismatch(quad):
    with pytest.raises(ValueError):
        run(quad, build_graph("static-cycle", 4), SolverConfig(K=3))


def test_short_run_invariants(quad):
    cfg = SolverConfig(K=300)
    g = build_graph("periodic-rotation", 10, B=2)
    res = run(quad, g, cfg, keep_traces=True)
    m = res.metrics
    eps = cfg.c_eps / np.sqrt(np.arange(2, cfg.K + 2))
    assert (m.violation <= eps[:, None] + 1e-12).all()
    for k, round_traces in enumerate(res.traces, start=1):
        rho = ball_radius(k, quad, cfg)
        cap = inner_cap(k, quad, cfg)
        for i, tr in enumerate(round_traces):
            assert tr.steps <= cap
            assert tr.inner.max_dist <= rho + 1e-12
            assert np.linalg.norm(tr.v - tr.z) <= (cfg.gamma(k, quad.D)
                                                   * np.linalg.norm(quad.objectives[i].subgradient(tr.v)) + 1e-12)


def test_determinism_across_workers(quad, cycle10):
    cfg1 = SolverConfig(K=200, timing=False)
    cfg4 = SolverConfig(K=200, timing=False, workers=4)
    a, b = run(quad, cycle10, cfg1), run(quad, cycle10, cfg4)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    assert a.metrics.to_csv() == b.metrics.to_csv()


def test_disagreement_shrinks_with_stepsize(quad, cycle10):
    # steady-state disagreement is driven by the outer stepsize
    big = run(quad, cycle10, SolverConfig(K=2000, timing=False)).metrics.max_consensus()[-1]
    small = run(quad, cycle10, SolverConfig(K=2000, c_gamma=0.25, timing=False)).metrics.max_consensus()[-1]
    assert small < 0.5 * big
