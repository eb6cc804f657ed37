"""Acceptance criteria as runnable checks, grouped into named suites.

Every check returns a :class:`CriterionResult`.  ``scale="full"`` uses the
instance counts and replica budgets the criteria call for, while
``scale="quick"`` shrinks them for smoke runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from seqdelib import bargaining as bg
from seqdelib import deliberation as dl
from seqdelib import distortion_lab as lab
from seqdelib import median_graph as mg
from seqdelib.metric_core import (
    AgentProfile,
    distortion,
    social_costs,
    squared_distortion,
)

STATIONARY_LIMIT = 1.20711
SCALES = ("full", "quick")


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number}: {self.title}: {self.detail}"


def _sized(scale: str, full: int, quick: int) -> int:
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    return full if scale == "full" else quick


# -- shared instance families ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class MedianInstance:
    label: str
    graph: mg.MedianGraph
    profile: AgentProfile


def _random_profile(rng: np.random.Generator, n: int) -> AgentProfile:
    k = int(rng.integers(1, 13))
    return AgentProfile(rng.integers(0, n, k), rng.integers(1, 6, k))


@lru_cache(maxsize=4)
def median_instances(count: int, seed: int = 20240) -> tuple[MedianInstance, ...]:
    """Random trees (n <= 40), grids (up to 6x6) and hypercubes (D <= 6) with random profiles."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        kind = k % 3
        if kind == 0:
            n = int(rng.integers(2, 41))
            g = mg.random_tree(n, [seed, k])
            label = f"tree{n}"
        elif kind == 1:
            w, h = (int(x) for x in rng.integers(1, 7, 2))
            if w * h < 2:
                w = 2
            g = mg.grid(w, h)
            label = f"grid{w}x{h}"
        else:
            D = int(rng.integers(1, 7))
            g = mg.hypercube(D)
            label = f"cube{D}"
        out.append(MedianInstance(f"{label}#{k}", g, _random_profile(rng, g.n)))
    return tuple(out)


@lru_cache(maxsize=512)
def _stationary(inst: MedianInstance):
    chain = dl.build_chain(inst.graph, inst.profile)
    return chain, dl.stationary_distribution(chain)


def _stationary_cost(inst: MedianInstance) -> float:
    _, pi = _stationary(inst)
    costs = social_costs(inst.graph.metric(), inst.profile)
    return float(pi.prob @ costs[pi.support])


# -- criteria --------------------------------------------------------------------


def criterion_1(scale: str = "full") -> CriterionResult:
    insts = median_instances(_sized(scale, 200, 30))
    worst, where = 0.0, ""
    for inst in insts:
        _, pi = _stationary(inst)
        r = distortion(inst.graph.metric(), inst.profile, pi)
        if r > worst:
            worst, where = r, inst.label
    ok = worst <= STATIONARY_LIMIT + 1e-6
    return CriterionResult(1, "stationary distortion bound", ok,
                           f"max exact distortion {worst:.7f} ({where}) vs limit {STATIONARY_LIMIT} + 1e-6 over {len(insts)} instances")


def _hypercube_instances(count: int, seed: int = 77) -> list[MedianInstance]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        D = int(rng.integers(1, 7))
        g = mg.hypercube(D)
        out.append(MedianInstance(f"cube{D}#{k}", g, _random_profile(rng, g.n)))
    return out


def criterion_2(scale: str = "full") -> CriterionResult:
    insts = _hypercube_instances(_sized(scale, 40, 10))
    marg_err = cost_err = 0.0
    for inst in insts:
        g, prof = inst.graph, inst.profile
        _, pi = _stationary(inst)
        coords = g.embedding.coords.astype(float)
        f = dl.dimension_fractions(g.embedding, prof)
        marg = pi.prob @ coords[pi.support]
        closed = np.array([dl.marginal_stationary(x) for x in f])
        marg_err = max(marg_err, float(np.max(np.abs(marg - closed))))
        # per-unit-weight disagreement in dimension k, averaged over the stationary law
        agent_bits = coords[prof.points]
        w = prof.weights / prof.total
        disagree = np.abs(coords[pi.support][:, None, :] - agent_bits[None, :, :])
        per_dim = np.einsum("s,a,sak->k", pi.prob, w, disagree)
        cost_closed = np.array([dl.expected_dim_cost(x) for x in f])
        cost_err = max(cost_err, float(np.max(np.abs(per_dim - cost_closed))))
    ok = marg_err <= 1e-10 and cost_err <= 1e-10
    return CriterionResult(2, "closed-form factorization", ok,
                           f"max marginal error {marg_err:.2e}, max per-dimension cost error {cost_err:.2e} "
                           f"over {len(insts)} hypercube instances (tol 1e-10)")


def criterion_3(scale: str = "full", threads: int = 1) -> CriterionResult:
    insts = median_instances(_sized(scale, 200, 30))
    replicas = _sized(scale, 100_000, 5_000)
    worst_margin, where, worst_val = -math.inf, "", 0.0
    for k, inst in enumerate(insts):
        finals = dl.simulate_finals(inst.graph, inst.profile, 9, replicas, seed=1000 + k, threads=threads)
        s = dl.summarize_finals(inst.graph, inst.profile, finals)
        margin = s.distortion - (1.22 + 3 * s.distortion_se)
        if margin > worst_margin:
            worst_margin, where, worst_val = margin, inst.label, s.distortion
    ok = worst_margin <= 0
    return CriterionResult(3, "convergence in 9 rounds", ok,
                           f"closest instance {where}: distortion {worst_val:.5f}, margin to 1.22 + 3 SE = {worst_margin:.5f} "
                           f"({len(insts)} instances x {replicas} replicas)")


def criterion_4(scale: str = "full") -> CriterionResult:
    st = lab.CURVES["stationary"].maximize()
    sp = lab.CURVES["shortest-path"].maximize()
    ol = lab.CURVES["oligarch"].maximize()
    ok = (
        abs(st.value - 1.2071) <= 1e-4
        and lab.shortest_path_ratio(0.25) == 1.125
        and abs(sp.value - 1.125) <= 1e-12
        and abs(sp.argmax - 0.25) <= 1e-6
        and 1.315 <= ol.value <= 1.316
    )
    return CriterionResult(4, "lower-bound curve maxima", ok,
                           f"stationary {st.value:.7f} at {st.argmax:.6f}; shortest-path {sp.value:.7f} at {sp.argmax:.6f}; "
                           f"oligarch {ol.value:.7f} at {ol.argmax:.6f}")


FRACTIONS = (0.5, 0.25, 0.1, 0.05, 0.01, 0.005)


def criterion_5(scale: str = "full") -> CriterionResult:
    g, prof = lab.kstar_instance(100)
    star = distortion(g.metric(), prof, dl.rd_distribution(prof))
    # exact rational evaluation (all social costs are integers here)
    costs = social_costs(g.metric(), prof)
    exact = sum(Fraction(int(w)) * Fraction(costs[p]) for p, w in prof.pairs()) / (
        prof.total * Fraction(costs.min())
    )
    two = lab.two_point_space().metric()
    worst = 0.0
    at_small = 0.0
    for f in FRACTIONS:
        p = lab.fraction_profile(f)
        val = squared_distortion(two, p, dl.rd_distribution(p))
        worst = max(worst, abs(val - lab.rd_two_point_squared(f)) / lab.rd_two_point_squared(f))
        if f == 0.005:
            at_small = val
    ok = exact == Fraction(99, 50) and abs(star - 1.98) <= 1e-12 and worst <= 1e-12 and at_small > 100
    return CriterionResult(5, "random dictatorship", ok,
                           f"100-star distortion {exact} exactly (float {star:.15f}); two-point squared distortion max rel. error {worst:.1e}; "
                           f"value at f=0.005 is {at_small:.4f}")


def _is_symmetric_or_unanimous(f: np.ndarray) -> bool:
    return bool(np.all(np.isclose(f, 0) | np.isclose(f, 1) | np.isclose(f, 0.5)))


def _dominance_instances(scale: str) -> list[MedianInstance]:
    extra = [
        MedianInstance("unanimous", mg.grid(3, 3), AgentProfile.from_pairs([(4, 3)])),
        MedianInstance("two-point-half", mg.path(2), AgentProfile.from_pairs([(0, 2), (1, 2)])),
        MedianInstance("cube-half", mg.hypercube(3), AgentProfile.from_pairs([(0, 1), (7, 1)])),
    ]
    return list(median_instances(_sized(scale, 200, 30))) + extra


def criterion_6(scale: str = "full") -> CriterionResult:
    insts = _dominance_instances(scale)
    violations = equal_cases = wrong_equal = 0
    for inst in insts:
        seq = _stationary_cost(inst)
        costs = social_costs(inst.graph.metric(), inst.profile)
        rd = dl.rd_distribution(inst.profile)
        rd_cost = float(rd.prob @ costs[rd.support])
        tol = 1e-9 * max(1.0, rd_cost)
        if seq > rd_cost + tol:
            violations += 1
        equal = abs(seq - rd_cost) <= tol
        special = _is_symmetric_or_unanimous(dl.dimension_fractions(inst.graph.embedding, inst.profile))
        equal_cases += equal
        if equal != special:
            wrong_equal += 1
    ok = violations == 0 and wrong_equal == 0
    return CriterionResult(6, "dominance over random dictatorship", ok,
                           f"{violations} violations, {equal_cases} equalities (all symmetric/unanimous: {wrong_equal == 0}) "
                           f"over {len(insts)} instances")


def general_metric_instances(count: int, seed: int = 4242):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(2, 31))
        kind = lab.METRIC_KINDS[k % len(lab.METRIC_KINDS)]
        space = lab.random_finite_metric(n, seed * 1000 + k, kind)
        out.append((f"{kind}{n}#{k}", space, lab.random_profile(n, seed * 1000 + k)))
    return out


def criterion_7(scale: str = "full", threads: int = 1) -> CriterionResult:
    count = _sized(scale, 100, 15)
    replicas = _sized(scale, 10_000, 1_000)
    rounds = 20
    cases = general_metric_instances(count)
    for n in (3, 5, 10, 20, 50):
        space, prof = lab.metric_star_shortcut_instance(n, 0.01)
        cases.append((f"star-shortcut{n}", space, prof))
    failed = []
    worst_d = worst_sq = 0.0
    for k, (label, space, prof) in enumerate(cases):
        rep = lab.general_metric_distortion_sweep(space, prof, rounds, replicas, seed=7000 + k, threads=threads)
        worst_d = max(worst_d, rep.summary.distortion)
        worst_sq = max(worst_sq, rep.summary.squared_distortion)
        if not rep.ok:
            failed.append(label)
    space, prof = lab.metric_star_shortcut_instance(50, 0.01)
    costs = social_costs(space, prof)
    shortcut_ratios = costs[51:] / costs[0]
    analytic_ok = bool(np.all(np.abs(shortcut_ratios - 2.8908) <= 1e-4))
    ok = not failed and analytic_ok
    return CriterionResult(7, "general metrics", ok,
                           f"max distortion {worst_d:.4f}, max squared distortion {worst_sq:.4f} over {len(cases)} instances "
                           f"(T={rounds}, {replicas} replicas; failures: {failed or 'none'}); "
                           f"shortcut ratio range [{shortcut_ratios.min():.6f}, {shortcut_ratios.max():.6f}]")


# -- criterion 8: property sweeps -------------------------------------------------


def _bargain_is_median(graphs) -> int:
    bad = 0
    for g in graphs:
        idx = np.arange(g.n)
        brute = bg.bargain_points(g.metric(), idx[:, None, None], idx[None, :, None], idx[None, None, :])
        bad += not np.array_equal(brute, g.median_table)
    return bad


def _bargain_distance_bound(samples: int, seed: int = 99) -> int:
    rng = np.random.default_rng(seed)
    pool = general_metric_instances(100, seed=seed)
    bad = 0
    for _ in range(samples):
        _, space, _ = pool[int(rng.integers(len(pool)))]
        prof = lab.random_profile(space.n, int(rng.integers(2**31)))
        i, j, u = (int(x) for x in rng.choice(prof.points, 3))
        a = int(rng.integers(space.n))
        bad += not bg.lemma7_check(space, prof, i, j, u, a).holds
    return bad


def _pareto(runs: int, seed: int = 5) -> int:
    rng = np.random.default_rng(seed)
    classes: list[Callable[[int], tuple[mg.MedianGraph, AgentProfile]]] = [
        lambda k: mg.grid_closure_example(),
        lambda k: (lambda g: (g, _random_profile(rng, g.n)))(mg.random_tree(int(rng.integers(2, 51)), [seed, k])),
        lambda k: (lambda g: (g, _random_profile(rng, g.n)))(mg.grid(int(rng.integers(2, 7)), int(rng.integers(2, 7)))),
        lambda k: (lambda g: (g, _random_profile(rng, g.n)))(mg.hypercube(int(rng.integers(2, 7)))),
    ]
    bad = 0
    for make in classes:
        inst = None
        for k in range(runs):
            if inst is None or k % 50 == 0:
                inst = make(k)
            g, prof = inst
            traj = dl.run_sequential(g, prof, dl.DeliberationConfig(20, seed=seed * 100_000 + k))
            bad += not dl.trajectory_pareto_check(g, prof, traj)
    return bad


def _best_response_random(samples: int, seed: int = 11) -> int:
    rng = np.random.default_rng(seed)
    pool = [mg.random_tree(int(rng.integers(2, 41)), [seed, k]) for k in range(10)]
    pool += [mg.grid(int(rng.integers(2, 7)), int(rng.integers(2, 7))) for _ in range(10)]
    bad = 0
    for _ in range(samples):
        g = pool[int(rng.integers(len(pool)))]
        t = int(rng.integers(1, 11))
        pairs = tuple((int(x), int(y)) for x, y in rng.integers(0, g.n, (t, 2)))
        p_u, z = (int(x) for x in rng.integers(0, g.n, 2))
        bad += dl.best_response_gap(g, dl.BestResponseScenario(pairs), p_u, z) < 0
    return bad


def criterion_8(scale: str = "full") -> CriterionResult:
    max_n = _sized(scale, 12, 8)
    graphs = mg.enumerate_median_graphs(max_n)
    generated = [inst.graph for inst in median_instances(_sized(scale, 200, 30))] + [mg.grid_closure_example()[0]]
    parts = {}
    parts["bargain=median"] = _bargain_is_median(graphs)
    parts["median-commutes"] = sum(not mg.all_triples_commute(g) for g in graphs + generated)
    parts["bargain-bound"] = _bargain_distance_bound(_sized(scale, 10_000, 1_000))
    parts["pareto"] = _pareto(_sized(scale, 1000, 100))
    parts["br-final"] = sum(int(dl.final_round_gaps(g).min() < 0) for g in graphs)
    parts["br-random"] = _best_response_random(_sized(scale, 10_000, 1_000))
    chains = 0
    for inst in median_instances(_sized(scale, 200, 30)):
        chain, _ = _stationary(inst)
        dl.check_ergodic(chain)
        chains += 1
    ok = all(v == 0 for v in parts.values())
    summary = ", ".join(f"{k}={v}" for k, v in parts.items())
    return CriterionResult(8, "property suites", ok,
                           f"violations: {summary}; {len(graphs)} enumerated graphs (<= {max_n} vertices), "
                           f"{chains} ergodic chains")


# -- criterion 9: simplex ------------------------------------------------------------

SIMPLEX_SIM_INSTANCES = {
    2: (0.25, 0.75),
    3: (0.5, 0.3, 0.2),
    5: (0.4, 0.25, 0.15, 0.12, 0.08),
}


def criterion_9(scale: str = "full", threads: int = 1) -> CriterionResult:
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(_sized(scale, 10_000, 1_000)):
        d = int(rng.integers(2, 9))
        worst = max(worst, lab.simplex_distortion(lab.SimplexInstance(rng.dirichlet(np.ones(d) * rng.uniform(0.2, 3)))))
    bound = lab.LowerBoundCurve("simplex", lab.simplex_distortion_bound, 0.0, 1.0).maximize()
    near = lab.simplex_distortion(lab.simplex_near_tight(10**6))
    replicas = _sized(scale, 10_000, 2_000)
    z_max = 0.0
    for d, p in SIMPLEX_SIM_INSTANCES.items():
        inst = lab.SimplexInstance(np.array(p))
        sim = lab.simplex_simulate(inst, 200, replicas, seed=900 + d, threads=threads)
        z_max = max(z_max, float(np.max(np.abs(sim.mean - lab.simplex_stationary(inst)) / sim.se)))
    ok = (
        worst <= 4 / 3 + 1e-9
        and abs(bound.value - 4 / 3) <= 1e-9
        and abs(bound.argmax - 0.5) <= 1e-6
        and 0 < 4 / 3 - near <= 1e-6
        and z_max <= 3
    )
    return CriterionResult(9, "simplex", ok,
                           f"max closed-form distortion {worst:.9f}; bound max {bound.value:.12f} at alpha={bound.argmax:.6f}; "
                           f"near-tight family (d=1e6) {near:.9f}; max |sim - s|/SE = {z_max:.3f}")


# -- criterion 10: epsilon-unanimity ---------------------------------------------------


def criterion_10(scale: str = "full") -> CriterionResult:
    rng = np.random.default_rng(10)
    graphs = [mg.random_tree(int(rng.integers(3, 31)), [10, k]) for k in range(_sized(scale, 10, 3))]
    graphs += [mg.grid(int(rng.integers(2, 7)), int(rng.integers(2, 7))) for _ in range(_sized(scale, 10, 3))]
    worst_excess = -math.inf
    count = 0
    for eps in (0.01, 0.05, 0.1):
        for k, g in enumerate(graphs):
            prof = lab.epsilon_unanimous_instance(g, eps, majority=int(rng.integers(g.n)), seed=k)
            inst = MedianInstance(f"eps{eps}#{k}", g, prof)
            _, pi = _stationary(inst)
            worst_excess = max(worst_excess, distortion(g.metric(), prof, pi) - (1 + eps))
            count += 1
    two = lab.two_point_space()
    rd_err = 0.0
    for eps in (0.01, 0.05, 0.1):
        prof = lab.epsilon_unanimous_instance(two, eps)
        rd_err = max(rd_err, abs(distortion(two.metric(), prof, dl.rd_distribution(prof)) - 2 * (1 - eps)))
    ok = worst_excess <= 1e-9 and rd_err <= 1e-12
    return CriterionResult(10, "epsilon-unanimity", ok,
                           f"max (distortion - (1+eps)) = {worst_excess:.3e} over {count} instances; "
                           f"two-point rd error {rd_err:.1e}")


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}
THREADED = {3, 7, 9}

SUITES = {
    "bounds": (1, 2, 3, 4, 5, 6, 10),
    "properties": (8,),
    "simplex": (9,),
    "general-metric": (7,),
}


def run_criterion(number: int, scale: str = "full", threads: int = 1) -> CriterionResult:
    fn = CRITERIA[number]
    t0 = time.perf_counter()
    res = fn(scale, threads) if number in THREADED else fn(scale)
    return CriterionResult(res.number, res.title, res.passed, res.detail, time.perf_counter() - t0)


def run_suite(name: str, scale: str = "full", threads: int = 1) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(name)
    return [run_criterion(k, scale, threads) for k in SUITES[name]]
