from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqdelib import deliberation as dl
from seqdelib import median_graph as mg
from seqdelib.distortion_lab import fraction_profile, random_finite_metric
from seqdelib.metric_core import AgentProfile, DomainError, distortion, social_costs


def two_state_power(f: float, steps: int = 20_000) -> np.ndarray:
    """Independent oracle: iterate the two-state chain from the uniform vector."""
    P = np.array([[1 - f * f, f * f], [(1 - f) ** 2, 1 - (1 - f) ** 2]])
    v = np.array([0.5, 0.5])
    for _ in range(steps):
        v = v @ P
    return v


def test_unanimity_fixed_point():
    g = mg.grid(3, 3)
    prof = AgentProfile.from_pairs([(5, 4)])
    traj = dl.run_sequential(g, prof, dl.DeliberationConfig(12, seed=1))
    assert traj.initial == 5 and traj.final == 5
    finals = dl.simulate_finals(g, prof, 7, 300, seed=2)
    assert np.all(finals == 5)


def test_trajectory_invariants():
    g, prof = mg.grid_closure_example()
    traj = dl.run_sequential(g, prof, dl.DeliberationConfig(30, seed=9))
    assert traj.records[0].a == traj.initial
    for prev, cur in zip(traj.records, traj.records[1:]):
        assert cur.a == prev.o
    for r in traj.records:
        assert r.o == mg.triple_median(g, int(prof.points[r.u]), int(prof.points[r.v]), r.a)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "round,u,v,a,o" and len(lines) == 31


def test_general_metric_trajectory_uses_bruteforce_bargain():
    from seqdelib.bargaining import nash_bargain

    space = random_finite_metric(9, 1, "euclidean")
    prof = AgentProfile.one_per_point([0, 3, 5, 8])
    traj = dl.run_sequential(space, prof, dl.DeliberationConfig(15, seed=4))
    for r in traj.records:
        assert r.o == nash_bargain(space, int(prof.points[r.u]), int(prof.points[r.v]), r.a).point


def test_config_validation():
    with pytest.raises(DomainError):
        dl.DeliberationConfig(0)


def test_two_vertex_long_run_frequencies():
    g = mg.path(2)
    half = dl.simulate_finals(g, AgentProfile.from_pairs([(0, 1), (1, 1)]), 60, 20_000, seed=3)
    se = math.sqrt(0.25 / 20_000)
    assert abs(half.mean() - 0.5) <= 3 * se
    quarter = dl.simulate_finals(g, fraction_profile(0.25), 60, 20_000, seed=4)
    se = math.sqrt(0.09 / 20_000)
    assert abs(quarter.mean() - 0.1) <= 3 * se


def test_closed_forms():
    assert dl.marginal_stationary(0.5) == 0.5
    assert dl.marginal_stationary(0.25) == pytest.approx(0.1)
    assert dl.expected_dim_cost(0.25) == pytest.approx(0.3)
    assert dl.dim_cost_ratio(0.25) == pytest.approx(1.2)
    assert dl.dim_cost_ratio(0.0) == 1.0
    for f in (0.01, 0.1, 0.25, 0.4):
        assert dl.marginal_stationary(f) == pytest.approx(two_state_power(f)[1], abs=1e-12)
    with pytest.raises(DomainError):
        dl.dim_cost_ratio(0.7)
    with pytest.raises(DomainError):
        dl.marginal_stationary(1.5)


def test_ratio_maximum():
    f = 1 - 1 / math.sqrt(2)
    assert dl.dim_cost_ratio(f) == pytest.approx((1 + math.sqrt(2)) / 2, abs=1e-12)
    grid = np.linspace(1e-6, 0.5, 200_001)
    assert max(dl.dim_cost_ratio(x) for x in grid[::50]) <= 1.2071068


def test_convergence_rounds_examples():
    assert dl.convergence_rounds(0.012) == 9
    assert dl.convergence_rounds(0.01) == 10
    assert dl.convergence_rounds(0.5) == 4
    with pytest.raises(DomainError):
        dl.convergence_rounds(1.0)


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.012, 0.01, 1e-3, 1e-5])
def test_convergence_rounds_suffice_per_dimension(eps):
    # two-state chain started from a random agent's bit: after the prescribed
    # rounds the per-dimension cost ratio is within eps of its stationary value
    t = dl.convergence_rounds(eps)
    for f in np.linspace(1e-3, 0.5, 400):
        P = np.array([[1 - f * f, f * f], [(1 - f) ** 2, 1 - (1 - f) ** 2]])
        v = np.array([1 - f, f]) @ np.linalg.matrix_power(P, t)
        cost = v[1] * (1 - f) + v[0] * f
        assert abs(cost / f - dl.dim_cost_ratio(f)) <= eps


def test_rd_examples():
    prof = AgentProfile.from_pairs([(4, 3)])
    assert dl.rd_distribution(prof).as_dict() == {4: 1.0}
    assert dl.random_dictatorship(prof, np.random.default_rng(0)) == 4
    g = mg.star(100)
    star_prof = AgentProfile.one_per_point(range(1, 101))
    assert distortion(g.metric(), star_prof, dl.rd_distribution(star_prof)) == pytest.approx(1.98, abs=1e-12)


def test_oneshot_examples():
    g = mg.star(3)
    dist = dl.oneshot_distribution(g, AgentProfile.one_per_point([1, 2, 3]))
    # 27 ordered triples: 6 with distinct leaves give the centre, 7 give each leaf
    assert dist.as_dict() == pytest.approx({0: 6 / 27, 1: 7 / 27, 2: 7 / 27, 3: 7 / 27}, abs=1e-15)
    unanimous = dl.oneshot_distribution(g, AgentProfile.from_pairs([(2, 5)]))
    assert unanimous.as_dict() == {2: 1.0}
    for f in (0.1, 0.25, 0.5):
        two = dl.oneshot_distribution(mg.path(2), fraction_profile(f))
        assert two.prob_of(1) == pytest.approx(3 * f**2 - 2 * f**3, abs=1e-12)


def test_oneshot_sampler_matches_distribution():
    g = mg.star(3)
    prof = AgentProfile.one_per_point([1, 2, 3])
    s = dl.simulate_oneshot(g, prof, 30_000, seed=5)
    assert abs((s == 0).mean() - 6 / 27) <= 3 * math.sqrt((6 / 27) * (21 / 27) / 30_000)
    assert dl.oneshot_triple(g, AgentProfile.from_pairs([(2, 1)]), np.random.default_rng(0)) == 2


def test_chain_examples():
    g = mg.grid(3, 3)
    one = dl.build_chain(g, AgentProfile.from_pairs([(4, 2)]))
    assert one.states == (4,) and one.transition[0, 0] == 1.0
    assert dl.stationary_distribution(one).as_dict() == {4: 1.0}
    two = dl.build_chain(mg.path(2), fraction_profile(0.25))
    assert two.transition[0, 1] == pytest.approx(1 / 16)
    assert two.transition[1, 0] == pytest.approx(9 / 16)
    pi = dl.stationary_distribution(two)
    assert pi.prob == pytest.approx([0.9, 0.1], abs=1e-12)
    fig, prof = mg.grid_closure_example()
    chain = dl.build_chain(fig, prof)
    assert chain.states == tuple(range(8))
    assert np.allclose(chain.transition.sum(axis=1), 1, atol=1e-12)


def test_chain_triplets_export():
    chain = dl.build_chain(mg.path(2), fraction_profile(0.25))
    assert chain.triplets() == [(0, 0, 0.9375), (0, 1, 0.0625), (1, 0, 0.5625), (1, 1, 0.4375)]
    assert chain.triplets_csv().splitlines()[0] == "from,to,prob"


def test_reducible_chain_detected():
    chain = dl.build_chain(mg.path(2), fraction_profile(0.25))
    broken = dl.DeliberationChain(chain.states, np.eye(2), chain.closure)
    with pytest.raises(dl.ChainInconsistencyError):
        dl.stationary_distribution(broken)
    periodic = dl.DeliberationChain(chain.states, np.array([[0.0, 1.0], [1.0, 0.0]]), chain.closure)
    with pytest.raises(dl.ChainInconsistencyError):
        dl.stationary_distribution(periodic)


def test_monte_carlo_occupancy_matches_stationary():
    g, prof = mg.grid_closure_example()
    pi = dl.stationary_distribution(dl.build_chain(g, prof))
    finals = dl.simulate_finals(g, prof, 60, 40_000, seed=8)
    for v, p in pi.as_dict().items():
        se = math.sqrt(p * (1 - p) / finals.size)
        assert abs((finals == v).mean() - p) <= 3 * se + 1e-12


def test_transient_distribution_matches_simulation():
    g = mg.random_tree(12, 2)
    prof = AgentProfile.one_per_point([0, 3, 7, 11])
    chain = dl.build_chain(g, prof)
    exact = dl.outcome_distribution(chain, prof, 3)
    finals = dl.simulate_finals(g, prof, 3, 40_000, seed=1)
    for v, p in exact.as_dict().items():
        assert abs((finals == v).mean() - p) <= 3 * math.sqrt(p * (1 - p) / finals.size) + 1e-12


def test_threads_do_not_change_results():
    g = mg.grid(4, 4)
    prof = AgentProfile.one_per_point([0, 5, 15, 3])
    a = dl.simulate_finals(g, prof, 9, 5000, seed=7)
    b = dl.simulate_finals(g, prof, 9, 5000, seed=7, threads=4)
    assert np.array_equal(a, b)
    space = random_finite_metric(10, 3, "l1")
    prof = AgentProfile.one_per_point([0, 5, 9, 3])
    c = dl.simulate_finals(space, prof, 5, 3000, seed=1, threads=3)
    d = dl.simulate_finals(space, prof, 5, 3000, seed=1)
    assert np.array_equal(c, d)


def test_best_response_examples():
    g = mg.grid(3, 3)
    scen = dl.BestResponseScenario(((0, 8), (2, 6)))
    assert dl.best_response_gap(g, scen, 4, 4) == 0
    assert dl.final_round_gaps(g).min() >= 0


def test_best_response_exhaustive_final_round_small_graphs():
    for g in mg.enumerate_median_graphs(8):
        assert dl.final_round_gaps(g).min() >= 0


def test_final_round_gap_table_matches_scalar():
    g = mg.random_tree(7, 1)
    table = dl.final_round_gaps(g)
    for pu, a, pv, z in itertools.product(range(7), repeat=4):
        if (pu + a + pv + z) % 5 == 0:
            scen = dl.BestResponseScenario(((a, pv),))
            assert table[pu, a, pv, z] == dl.best_response_gap(g, scen, pu, z)


def test_pareto_check_examples():
    g = mg.star(4)
    prof = AgentProfile.from_pairs([(2, 3)])
    traj = dl.run_sequential(g, prof, dl.DeliberationConfig(4, seed=0))
    assert dl.trajectory_pareto_check(g, prof, traj)
    fig, fprof = mg.grid_closure_example()
    for k in range(200):
        t = dl.run_sequential(fig, fprof, dl.DeliberationConfig(10, seed=k))
        assert dl.trajectory_pareto_check(fig, fprof, t)


def test_summary_zero_optimum():
    g = mg.path(3)
    prof = AgentProfile.from_pairs([(1, 2)])
    s = dl.summarize_finals(g, prof, np.array([1, 1, 1]))
    assert s.distortion == 1.0
    assert math.isinf(dl.summarize_finals(g, prof, np.array([1, 0])).distortion)


@st.composite
def median_instances(draw):
    kind = draw(st.sampled_from(["tree", "grid", "cube"]))
    seed = draw(st.integers(0, 10_000))
    if kind == "tree":
        g = mg.random_tree(draw(st.integers(2, 20)), seed)
    elif kind == "grid":
        g = mg.grid(draw(st.integers(1, 4)), draw(st.integers(2, 4)))
    else:
        g = mg.hypercube(draw(st.integers(1, 4)))
    k = draw(st.integers(1, 6))
    pts = [draw(st.integers(0, g.n - 1)) for _ in range(k)]
    ws = [draw(st.integers(1, 4)) for _ in range(k)]
    return g, AgentProfile(np.array(pts), np.array(ws))


@given(median_instances())
def test_chain_is_stochastic_and_stationary(inst):
    g, prof = inst
    chain = dl.build_chain(g, prof)
    P = chain.transition
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert set(chain.states) == set(chain.closure.members)
    pi = dl.stationary_distribution(chain)
    assert np.max(np.abs(pi.prob @ P - pi.prob)) <= 1e-10


@given(median_instances())
def test_stationary_cost_factorizes(inst):
    g, prof = inst
    pi = dl.stationary_distribution(dl.build_chain(g, prof))
    costs = social_costs(g.metric(), prof)
    assert float(pi.prob @ costs[pi.support]) == pytest.approx(dl.stationary_cost_closed_form(g, prof), abs=1e-9)


@given(median_instances())
def test_stationary_distortion_and_dominance(inst):
    g, prof = inst
    pi = dl.stationary_distribution(dl.build_chain(g, prof))
    assert distortion(g.metric(), prof, pi) <= 1.20711 + 1e-6
    costs = social_costs(g.metric(), prof)
    rd = dl.rd_distribution(prof)
    assert float(pi.prob @ costs[pi.support]) <= float(rd.prob @ costs[rd.support]) + 1e-9


@given(st.floats(0.0, 1.0))
def test_dimension_dominance_closed_form(f):
    assert dl.expected_dim_cost(f) <= 2 * f * (1 - f) + 1e-15


@given(median_instances(), st.integers(1, 6), st.data())
def test_random_multiround_best_response(inst, t, data):
    g, _ = inst
    pairs = tuple((data.draw(st.integers(0, g.n - 1)), data.draw(st.integers(0, g.n - 1))) for _ in range(t))
    pu, z = data.draw(st.integers(0, g.n - 1)), data.draw(st.integers(0, g.n - 1))
    assert dl.best_response_gap(g, dl.BestResponseScenario(pairs), pu, z) >= 0


@given(median_instances(), st.integers(0, 1000))
def test_trajectories_pareto_efficient(inst, seed):
    g, prof = inst
    traj = dl.run_sequential(g, prof, dl.DeliberationConfig(8, seed=seed))
    assert dl.trajectory_pareto_check(g, prof, traj)
