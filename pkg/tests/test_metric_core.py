from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqdelib.metric_core import (
    AgentProfile,
    DomainError,
    FiniteMetric,
    OutcomeDistribution,
    check_metric_axioms,
    distortion,
    generalized_median,
    is_pareto_dominated,
    metric_from_weighted_graph,
    social_cost,
    social_costs,
    squared_distortion,
)

from conftest import floyd_warshall

STAR3 = [(0, 1, 1), (0, 2, 1), (0, 3, 1)]


def star3():
    return metric_from_weighted_graph(STAR3, 4), AgentProfile.one_per_point([1, 2, 3])


def test_social_cost_star():
    space, prof = star3()
    assert social_cost(space, prof, 0) == 3
    # 0 + 2 + 2 through the centre
    assert social_cost(space, prof, 1) == 4


def test_social_cost_single_agent_at_point():
    space, _ = star3()
    assert social_cost(space, AgentProfile.one_per_point([2]), 2) == 0


def test_social_cost_invalid_point():
    space, prof = star3()
    with pytest.raises(DomainError):
        social_cost(space, prof, 4)
    with pytest.raises(DomainError):
        social_cost(space, prof, 1.5)


def test_generalized_median_examples():
    space, prof = star3()
    assert generalized_median(space, prof) == 0
    two = FiniteMetric.from_table([[0, 1], [1, 0]])
    assert generalized_median(two, AgentProfile.from_pairs([(0, 3), (1, 1)])) == 0
    assert generalized_median(two, AgentProfile.from_pairs([(0, 1), (1, 1)])) == 0
    assert generalized_median(two, AgentProfile.from_pairs([(0, 1), (1, 2)])) == 1


def test_empty_profile_rejected():
    with pytest.raises(DomainError):
        AgentProfile.from_pairs([])
    with pytest.raises(DomainError):
        AgentProfile(np.array([0]), np.array([0]))


def test_distortion_examples():
    space, prof = star3()
    assert distortion(space, prof, OutcomeDistribution.point_mass(0)) == 1.0
    uniform_two_leaves = OutcomeDistribution(np.array([1, 2]), np.array([0.5, 0.5]))
    assert distortion(space, prof, uniform_two_leaves) == pytest.approx(4 / 3, abs=1e-12)


def test_distortion_hundred_star_leaf():
    edges = [(0, i, 1) for i in range(1, 101)]
    space = metric_from_weighted_graph(edges, 101)
    prof = AgentProfile.one_per_point(range(1, 101))
    assert distortion(space, prof, OutcomeDistribution.point_mass(7)) == pytest.approx(1.98, abs=1e-12)


def test_squared_distortion_two_point_rd():
    two = FiniteMetric.from_table([[0, 1], [1, 0]])
    prof = AgentProfile.from_pairs([(0, 1), (1, 9)])
    rd = OutcomeDistribution.from_weights([0, 1], [1, 9])
    assert squared_distortion(two, prof, rd) == pytest.approx(9.0, abs=1e-12)


def test_squared_distortion_deterministic_is_square():
    space, prof = star3()
    assert squared_distortion(space, prof, OutcomeDistribution.point_mass(1)) == pytest.approx((4 / 3) ** 2)


def test_zero_optimum_handling():
    space, _ = star3()
    prof = AgentProfile.from_pairs([(2, 4)])
    assert distortion(space, prof, OutcomeDistribution.point_mass(2)) == 1.0
    assert math.isinf(distortion(space, prof, OutcomeDistribution.point_mass(0)))
    assert math.isinf(squared_distortion(space, prof, OutcomeDistribution.point_mass(0)))


def test_pareto_examples():
    space, prof = star3()
    assert is_pareto_dominated(space, prof, 0) is None
    path = metric_from_weighted_graph([(0, 1, 1), (1, 2, 1)], 3)
    assert is_pareto_dominated(path, AgentProfile.one_per_point([0, 2]), 0) is None
    assert is_pareto_dominated(path, AgentProfile.one_per_point([1, 2]), 0) == 1
    single = AgentProfile.one_per_point([3])
    z = is_pareto_dominated(space, single, 1)
    assert z is not None and space.d(z, 3) < space.d(1, 3)
    assert is_pareto_dominated(space, single, 3) is None


def test_weighted_graph_examples():
    tri = metric_from_weighted_graph([(0, 1, 1), (1, 2, 1), (0, 2, 1)], 3)
    assert np.array_equal(tri.dist, 1 - np.eye(3))
    path = metric_from_weighted_graph([(0, 1, 1), (1, 2, 1), (2, 3, 1)], 4)
    assert path.d(0, 3) == 3


def test_weighted_graph_shortcut_construction():
    eps, n = 0.01, 4
    edges = [(0, i, 1.0) for i in range(1, n + 1)] + [(1, 5, 1 - eps), (2, 5, 1 - eps)]
    m = metric_from_weighted_graph(edges, 6)
    assert m.d(1, 2) == pytest.approx(1.98)
    assert m.d(3, 4) == 2.0


def test_weighted_graph_errors():
    with pytest.raises(DomainError):
        metric_from_weighted_graph([(0, 1, 1)], 3)
    with pytest.raises(DomainError):
        metric_from_weighted_graph([(0, 1, -1)], 2)
    with pytest.raises(DomainError):
        metric_from_weighted_graph([(0, 0, 1)], 2)


def test_metric_axiom_violations():
    with pytest.raises(DomainError):
        check_metric_axioms(np.array([[0, 1], [2, 0.0]]))
    with pytest.raises(DomainError):
        check_metric_axioms(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0.0]]))
    with pytest.raises(DomainError):
        check_metric_axioms(np.array([[0, 0], [0, 0.0]]))


def test_outcome_distribution_validation():
    with pytest.raises(DomainError):
        OutcomeDistribution(np.array([0, 1]), np.array([0.5, 0.6]))
    with pytest.raises(DomainError):
        OutcomeDistribution(np.array([0, 1]), np.array([1.5, -0.5]))
    d = OutcomeDistribution.from_weights([2, 0, 2], [1, 1, 2])
    assert d.as_dict() == {0: 0.25, 2: 0.75}
    assert OutcomeDistribution.empirical([1, 1, 3, 1]).prob_of(1) == 0.75


@st.composite
def weighted_instances(draw):
    n = draw(st.integers(2, 9))
    # random spanning tree plus extra edges keeps the graph connected
    edges = []
    for v in range(1, n):
        edges.append((draw(st.integers(0, v - 1)), v, draw(st.floats(0.1, 5.0))))
    for _ in range(draw(st.integers(0, n))):
        i, j = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
        if i != j:
            edges.append((i, j, draw(st.floats(0.1, 5.0))))
    k = draw(st.integers(1, 6))
    pts = draw(st.lists(st.integers(0, n - 1), min_size=k, max_size=k))
    ws = draw(st.lists(st.integers(1, 4), min_size=k, max_size=k))
    return n, edges, AgentProfile(np.array(pts), np.array(ws))


@given(weighted_instances())
def test_generated_spaces_are_metrics(inst):
    n, edges, _ = inst
    m = metric_from_weighted_graph(edges, n)
    check_metric_axioms(m.dist, tol=1e-12)
    assert np.allclose(m.dist, floyd_warshall(n, edges), atol=1e-12)


@given(weighted_instances())
def test_generalized_median_minimizes(inst):
    n, edges, prof = inst
    m = metric_from_weighted_graph(edges, n)
    best = generalized_median(m, prof)
    costs = [social_cost(m, prof, z) for z in range(n)]
    assert all(costs[best] <= c + 1e-12 for c in costs)
    assert is_pareto_dominated(m, prof, best) is None


@given(weighted_instances(), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=9))
def test_distortion_at_least_one(inst, raw):
    n, edges, prof = inst
    m = metric_from_weighted_graph(edges, n)
    w = np.array(raw[:n] + [0.0] * (n - len(raw[:n])))
    if w.sum() <= 0:
        w[0] = 1.0
    dist = OutcomeDistribution.from_weights(np.arange(n), w)
    opt = social_costs(m, prof).min()
    if opt > 1e-9:
        assert distortion(m, prof, dist) >= 1 - 1e-12
        assert squared_distortion(m, prof, dist) >= 1 - 1e-12
