import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distsip.graph import (
    GraphError,
    TimeVaryingGraph,
    TransitionConstants,
    build_graph,
    is_strongly_connected,
    transition_decay_bound,
    transition_product,
    validate_graph,
    weight_matrix_at,
)

KIND_ST = st.sampled_from(["static-cycle", "static-line", "periodic-rotation", "seeded-gossip"])


def test_cycle_v3_is_circulant():
    A = weight_matrix_at(build_graph("static-cycle", 3), 1)
    expected = np.array([[0.5, 0, 0.5], [0.5, 0.5, 0], [0, 0.5, 0.5]])
    np.testing.assert_allclose(A, expected)
    np.testing.assert_allclose(A.sum(0), 1)
    np.testing.assert_allclose(A.sum(1), 1)


def test_line_v2_metropolis():
    A = weight_matrix_at(build_graph("static-line", 2), 7)
    np.testing.assert_allclose(A, [[0.5, 0.5], [0.5, 0.5]])


def test_rotation_union_strongly_connected():
    g = build_graph("periodic-rotation", 4, B=3)
    union = sum(weight_matrix_at(g, k) for k in (1, 2, 3))
    assert is_strongly_connected(union)
    # a single round on its own is not connected
    assert not is_strongly_connected(weight_matrix_at(g, 1))


def test_cycle_validation_passes():
    rep = validate_graph(build_graph("static-cycle", 10), 100)
    assert rep.passed
    assert rep.min_pos_entry == 0.5
    assert "PASS" in rep.summary()
    assert rep.to_csv().splitlines()[0] == "round,max_row_residual,max_col_residual,min_pos_entry,window_connected"


def test_validation_reports_bad_row_sum():
    A = np.full((3, 3), 1 / 3)
    A[0] = [0.5, 0.3, 0.3]
    rep = validate_graph(TimeVaryingGraph.from_matrices([A], eta=0.3, B=1), 5)
    assert not rep.passed
    bad = rep.first_failure()
    assert bad.round == 1
    assert bad.max_row_residual == pytest.approx(0.1)


def test_gossip_window_too_small_fails_connectivity():
    g = build_graph("seeded-gossip", 6, B=2, seed=3)
    rep = validate_graph(g, 12)
    assert not rep.passed
    assert rep.first_failure().window_connected is False
    assert rep.first_failure().round == 1
    assert validate_graph(build_graph("seeded-gossip", 6, seed=3), 12).passed


def test_validate_needs_horizon_at_least_B():
    with pytest.raises(ValueError):
        validate_graph(build_graph("periodic-rotation", 5, B=3), 2)


@pytest.mark.parametrize("kw", [dict(eta=1.5), dict(eta=0.9), dict(self_weight=1.0)])
def test_build_rejects_bad_parameters(kw):
    with pytest.raises(GraphError):
        build_graph("static-cycle", 10, **kw)


def test_unknown_kind():
    with pytest.raises(GraphError):
        build_graph("star", 4)


def test_constants_example():
    tc = TransitionConstants.from_graph_params(0.5, 10, 1)
    # (1 - 0.5/400)^-2 = 1 / 0.9975015625
    assert tc.gamma == pytest.approx(1.0025047, abs=1e-7)
    assert tc.beta == pytest.approx(0.99875, abs=1e-12)
    assert transition_decay_bound(tc, 5001, 1) < 2e-3


def test_transition_product_examples():
    g = build_graph("static-line", 5)
    A = weight_matrix_at(g, 1)
    np.testing.assert_allclose(transition_product(g, 4, 4), A)
    np.testing.assert_allclose(transition_product(g, 5, 4), A @ A, atol=1e-15)
    with pytest.raises(ValueError):
        transition_product(g, 3, 4)
    with pytest.raises(ValueError):
        transition_decay_bound(g.constants, 3, 3)


def test_cycle_200_within_bound(cycle10):
    phi = transition_product(cycle10, 201, 1)
    assert np.abs(phi - 0.1).max() <= transition_decay_bound(cycle10.constants, 201, 1)


def test_decay_bound_monotone(cycle10):
    b = [transition_decay_bound(cycle10.constants, 1 + d, 1) for d in (1, 10, 100, 1000, 10000)]
    assert all(x > y for x, y in zip(b, b[1:]))


@settings(max_examples=40, deadline=None)
@given(kind=KIND_ST, V=st.integers(2, 12), seed=st.integers(0, 50))
def test_generated_schedules_are_valid(kind, V, seed):
    g = build_graph(kind, V, seed=seed)
    rep = validate_graph(g, max(g.B, 2 * g.period))
    assert rep.passed
    for k in range(1, g.period + 1):
        A = g.weight_matrix_at(k)
        assert np.abs(A.sum(0) - 1).max() <= 1e-12
        assert np.abs(A.sum(1) - 1).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(kind=KIND_ST, V=st.integers(2, 8), s=st.integers(1, 30), gap1=st.integers(0, 20), gap2=st.integers(1, 20))
def test_transition_associativity(kind, V, s, gap1, gap2):
    g = build_graph(kind, V, seed=1)
    r, t = s + gap1, s + gap1 + gap2
    lhs = transition_product(g, t, s)
    rhs = transition_product(g, t, r + 1) @ transition_product(g, r, s)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    np.testing.assert_allclose(lhs.sum(0), 1, atol=1e-12)
    np.testing.assert_allclose(lhs.sum(1), 1, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(kind=KIND_ST, V=st.integers(2, 10), s=st.integers(1, 50), gap=st.integers(1, 500))
def test_transition_decay_bound_holds(kind, V, s, gap):
    g = build_graph(kind, V, seed=2)
    phi = transition_product(g, s + gap, s)
    assert np.abs(phi - 1 / V).max() <= transition_decay_bound(g.constants, s + gap, s)
