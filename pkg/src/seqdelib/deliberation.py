"""Sequential pairwise deliberation: simulation, exact chains and closed forms.

Each round draws an ordered pair of agents independently by weight (with
replacement).  The pair bargains with the current disagreement point and
the bargain becomes the next disagreement point.  The first disagreement
point is the bliss point of a weight-proportional random agent.  After ``T``
rounds the outcome of the last bargain is the social choice.
"""

from __future__ import annotations

import csv
import io
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from seqdelib.bargaining import BargainCache
from seqdelib.median_graph import HypercubeEmbedding, MedianClosure, MedianGraph, median_closure
from seqdelib.metric_core import (
    AgentProfile,
    DomainError,
    FiniteMetric,
    OutcomeDistribution,
    generalized_median,
    is_pareto_dominated,
    social_costs,
)

Space = Union[MedianGraph, FiniteMetric]

#: replicas per independent RNG stream; fixed so results do not depend on threading
CHUNK = 1024


class ChainInconsistencyError(RuntimeError):
    """The deliberation chain is reducible or periodic, which indicates a bug."""


@dataclass(frozen=True)
class DeliberationConfig:
    rounds: int
    seed: int = 0
    initial: Optional[int] = None  # fixed first disagreement point; None draws a random agent's bliss point

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise DomainError("rounds must be >= 1")


@dataclass(frozen=True)
class RoundRecord:
    u: int  # agent entries (indices into the profile)
    v: int
    a: int  # disagreement point
    o: int  # bargain


@dataclass(frozen=True)
class Trajectory:
    initial: int
    records: tuple[RoundRecord, ...]

    @property
    def final(self) -> int:
        return self.records[-1].o

    @property
    def rounds(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "u", "v", "a", "o"])
        for t, r in enumerate(self.records, start=1):
            w.writerow([t, r.u, r.v, r.a, r.o])
        return buf.getvalue()


def as_metric(space: Space) -> FiniteMetric:
    return space.metric() if isinstance(space, MedianGraph) else space


class _Bargainer:
    """Vectorized bargaining rule for either kind of space (thread-safe)."""

    def __init__(self, space: Space):
        self.space = space
        if isinstance(space, MedianGraph):
            self._cache = None
        else:
            self._cache = BargainCache(space)
            self._lock = threading.Lock()

    def __call__(self, pu, pv, a) -> np.ndarray:
        if self._cache is None:
            return self.space.medians(pu, pv, a)
        with self._lock:
            return self._cache.lookup(pu, pv, a)


def _check_profile(space: Space, profile: AgentProfile) -> None:
    n = space.n
    if profile.points.max() >= n:
        raise DomainError(f"bliss point {int(profile.points.max())} outside a space of {n} points")


def _agent_sampler(profile: AgentProfile) -> Callable[[np.random.Generator, int], np.ndarray]:
    cum = np.cumsum(profile.weights)

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return np.searchsorted(cum, rng.integers(0, cum[-1], size=size), side="right")

    return draw


def run_sequential(
    space: Space, profile: AgentProfile, config: DeliberationConfig, rng: Optional[np.random.Generator] = None
) -> Trajectory:
    """One deliberation run, recording every round."""
    _check_profile(space, profile)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    bargain = _Bargainer(space)
    draw = _agent_sampler(profile)
    pts = profile.points
    if config.initial is None:
        a = int(pts[draw(rng, 1)[0]])
    else:
        a = int(config.initial)
        if not 0 <= a < space.n:
            raise DomainError(f"initial point {a} outside the space")
    start = a
    records = []
    for _ in range(config.rounds):
        u, v = (int(x) for x in draw(rng, 2))
        o = int(bargain(pts[u], pts[v], a))
        records.append(RoundRecord(u, v, a, o))
        a = o
    return Trajectory(start, tuple(records))


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Independent stream for replica block ``chunk`` under a run-level seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def run_chunked(
    replicas: int, seed: int, block: Callable[[np.random.Generator, int], np.ndarray], threads: int = 1
) -> np.ndarray:
    """Evaluate ``block(rng, size)`` over fixed-size replica blocks and concatenate in order."""
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    sizes = [min(CHUNK, replicas - lo) for lo in range(0, replicas, CHUNK)]
    jobs = [(chunk_rng(seed, c), s) for c, s in enumerate(sizes)]
    if threads <= 1 or len(jobs) == 1:
        parts = [block(r, s) for r, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: block(*job), jobs))
    return np.concatenate(parts)


def simulate_finals(
    space: Space,
    profile: AgentProfile,
    rounds: int,
    replicas: int,
    seed: int,
    *,
    initial: Optional[int] = None,
    threads: int = 1,
) -> np.ndarray:
    """Final outcomes of ``replicas`` independent deliberation runs."""
    _check_profile(space, profile)
    if rounds < 1:
        raise DomainError("rounds must be >= 1")
    bargain = _Bargainer(space)
    draw = _agent_sampler(profile)
    pts = profile.points

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        if initial is None:
            a = pts[draw(rng, size)]
        else:
            a = np.full(size, initial, dtype=np.int64)
        for _ in range(rounds):
            u = draw(rng, size)
            v = draw(rng, size)
            a = bargain(pts[u], pts[v], a)
        return np.asarray(a, dtype=np.int64)

    return run_chunked(replicas, seed, block, threads)


# -- baselines ----------------------------------------------------------------


def random_dictatorship(profile: AgentProfile, rng: np.random.Generator) -> int:
    return int(profile.points[_agent_sampler(profile)(rng, 1)[0]])


def rd_distribution(profile: AgentProfile) -> OutcomeDistribution:
    return OutcomeDistribution.from_weights(profile.points, profile.weights)


def simulate_rd(profile: AgentProfile, replicas: int, seed: int, *, threads: int = 1) -> np.ndarray:
    draw = _agent_sampler(profile)
    return run_chunked(replicas, seed, lambda rng, size: profile.points[draw(rng, size)], threads)


def oneshot_triple(g: MedianGraph, profile: AgentProfile, rng: np.random.Generator) -> int:
    """Median of three independent weight-proportional bliss draws."""
    x, y, z = profile.points[_agent_sampler(profile)(rng, 3)]
    return int(g.medians(x, y, z))


def oneshot_distribution(g: MedianGraph, profile: AgentProfile) -> OutcomeDistribution:
    pts, w = profile.support()
    meds = g.medians(pts[:, None, None], pts[None, :, None], pts[None, None, :])
    mass = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return OutcomeDistribution.from_weights(meds.ravel(), mass.ravel().astype(float))


def simulate_oneshot(g: MedianGraph, profile: AgentProfile, replicas: int, seed: int, *, threads: int = 1) -> np.ndarray:
    draw = _agent_sampler(profile)
    pts = profile.points

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        x, y, z = (pts[draw(rng, size)] for _ in range(3))
        return g.medians(x, y, z)

    return run_chunked(replicas, seed, block, threads)


# -- exact chain --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DeliberationChain:
    """Transition matrix of the deliberation chain over the median closure."""

    states: tuple[int, ...]
    transition: np.ndarray
    closure: MedianClosure

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, v: int) -> int:
        return self.states.index(v)

    def triplets(self) -> list[tuple[int, int, float]]:
        """Nonzero transitions as ``(from vertex, to vertex, probability)``."""
        rows, cols = np.nonzero(self.transition)
        return [(self.states[r], self.states[c], float(self.transition[r, c])) for r, c in zip(rows, cols)]

    def triplets_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["from", "to", "prob"])
        for r in self.triplets():
            w.writerow([r[0], r[1], repr(r[2])])
        return buf.getvalue()

    def initial_vector(self, profile: AgentProfile) -> np.ndarray:
        pts, w = profile.support()
        vec = np.zeros(self.size)
        for p, wt in zip(pts, w):
            vec[self.index(int(p))] += wt
        return vec / vec.sum()

    def distribution(self, vec: np.ndarray) -> OutcomeDistribution:
        vec = np.clip(vec, 0.0, None)
        return OutcomeDistribution(np.array(self.states), vec / vec.sum())


def build_chain(g: MedianGraph, profile: AgentProfile) -> DeliberationChain:
    closure = median_closure(g, profile)
    states = closure.members
    pos = {v: i for i, v in enumerate(states)}
    pts, w = profile.support()
    pair_w = (w[:, None] * w[None, :]).astype(float).ravel() / float(w.sum()) ** 2
    P = np.zeros((len(states), len(states)))
    for i, a in enumerate(states):
        meds = g.medians(pts[:, None], pts[None, :], a).ravel()
        np.add.at(P[i], [pos[int(m)] for m in meds], pair_w)
    P.setflags(write=False)
    return DeliberationChain(states, P, closure)


def check_ergodic(chain: DeliberationChain) -> None:
    P = chain.transition
    ncomp, _ = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    if ncomp != 1:
        raise ChainInconsistencyError(f"chain is reducible ({ncomp} strongly connected classes)")
    if np.any(np.diag(P) <= 0):
        bad = chain.states[int(np.flatnonzero(np.diag(P) <= 0)[0])]
        raise ChainInconsistencyError(f"state {bad} has no self-loop")


def _power_limit(P: np.ndarray, tol: float = 1e-14, max_squarings: int = 64) -> np.ndarray:
    Q = P.copy()
    for _ in range(max_squarings):
        Q2 = Q @ Q
        # rounding drift in the row sums doubles with every squaring
        Q2 /= Q2.sum(axis=1, keepdims=True)
        if np.max(np.abs(Q2 - Q)) <= tol:
            return Q2.mean(axis=0)
        Q = Q2
    return Q.mean(axis=0)


#: cross-check by repeated squaring only up to this many states
POWER_CHECK_MAX_STATES = 600


def stationary_distribution(chain: DeliberationChain) -> OutcomeDistribution:
    """Unique stationary distribution by dense LU, cross-checked by power iteration."""
    check_ergodic(chain)
    P = chain.transition
    n = chain.size
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), b)
    resid = np.max(np.abs(pi @ P - pi))
    if resid > 1e-10 or np.any(pi < -1e-12):
        raise ChainInconsistencyError(f"linear solve residual {resid:.3g}")
    if n <= POWER_CHECK_MAX_STATES:
        gap = np.max(np.abs(_power_limit(P) - pi))
        if gap > 1e-10:
            raise ChainInconsistencyError(f"power iteration disagrees with linear solve by {gap:.3g}")
    return chain.distribution(pi)


def outcome_distribution(chain: DeliberationChain, profile: AgentProfile, rounds: int) -> OutcomeDistribution:
    """Exact distribution of the final outcome after ``rounds`` bargains from a random bliss point."""
    if rounds < 1:
        raise DomainError("rounds must be >= 1")
    vec = chain.initial_vector(profile)
    for _ in range(rounds):
        vec = vec @ chain.transition
    return chain.distribution(vec)


# -- per-dimension closed forms ------------------------------------------------


def _check_fraction(f: float) -> float:
    if not 0.0 <= f <= 1.0:
        raise DomainError(f"fraction {f} outside [0, 1]")
    return float(f)


def marginal_stationary(f: float) -> float:
    """Long-run probability that a dimension holds 1 when a fraction ``f`` of weight has 1 there."""
    f = _check_fraction(f)
    return f * f / (1 + 2 * f * f - 2 * f)


def expected_dim_cost(f: float) -> float:
    """Long-run expected per-unit-weight cost contributed by one dimension."""
    f = _check_fraction(f)
    return f * (1 - f) / (f * f + (1 - f) ** 2)


def dim_cost_ratio(f: float) -> float:
    """Per-dimension stationary cost over optimal cost, for minority fraction ``f``."""
    f = _check_fraction(f)
    if f > 0.5:
        raise DomainError("ratio is defined for the minority fraction f <= 1/2")
    if f == 0.0:
        return 1.0
    return (1 - f) / (f * f + (1 - f) ** 2)


def convergence_rounds(eps: float) -> int:
    """Rounds after which every dimension is within ``eps`` of its stationary cost ratio."""
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0, 1)")
    return math.ceil(math.log2(1 / eps) + 2.575)


def dimension_fractions(emb: HypercubeEmbedding, profile: AgentProfile) -> np.ndarray:
    """Weight fraction of agents whose bliss image has a 1 in each coordinate."""
    bits = emb.coords[profile.points].astype(float)
    return profile.weights.astype(float) @ bits / profile.total


def stationary_cost_closed_form(g: MedianGraph, profile: AgentProfile) -> float:
    """Stationary expected social cost, summed dimension by dimension over the embedding."""
    f = dimension_fractions(g.embedding, profile)
    return profile.total * float(sum(expected_dim_cost(x) for x in f))


# -- incentive and efficiency checks --------------------------------------------


@dataclass(frozen=True)
class BestResponseScenario:
    """Bargaining context for one agent's report.

    ``pairs[0]`` is (disagreement point, opponent's bliss point) for the bargain
    in which the agent reports; later pairs are the bliss points of the
    agents drawn in subsequent rounds.
    """

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if not self.pairs:
            raise DomainError("scenario needs at least one round")


def play_out(g: MedianGraph, scenario: BestResponseScenario, report: int) -> int:
    m = report
    for x, y in scenario.pairs:
        m = int(g.medians(x, y, m))
    return m


def best_response_gap(g: MedianGraph, scenario: BestResponseScenario, p_u: int, z: int) -> int:
    """Distance penalty for reporting ``z`` instead of the true bliss point ``p_u``.

    Nonnegative values mean truth-telling is weakly better.
    """
    d = g.dist
    return int(d[p_u, play_out(g, scenario, z)] - d[p_u, play_out(g, scenario, p_u)])


def final_round_gaps(g: MedianGraph) -> np.ndarray:
    """All single-round gaps, indexed ``[p_u, a, p_v, z]``."""
    T = g.median_table
    d = g.dist
    n = g.n
    lied = T[None, :, :, :]  # median(a, p_v, z)
    truth = np.transpose(T, (2, 0, 1))[:, :, :, None]  # median(a, p_v, p_u)
    u = np.arange(n)[:, None, None, None]
    return d[u, lied] - d[u, truth]


def trajectory_pareto_check(space: Space, profile: AgentProfile, trajectory: Trajectory) -> bool:
    return is_pareto_dominated(as_metric(space), profile, trajectory.final) is None


# -- Monte Carlo summaries -------------------------------------------------------


@dataclass(frozen=True)
class McSummary:
    replicas: int
    mean_sc: float
    se: float
    opt_sc: float
    distortion: float
    distortion_se: float
    squared_distortion: float
    squared_distortion_se: float


def summarize_finals(space: Space, profile: AgentProfile, finals: Sequence[int]) -> McSummary:
    """Sample mean social cost and (squared) distortion with standard errors."""
    metric = as_metric(space)
    costs = social_costs(metric, profile)
    opt = float(costs[generalized_median(metric, profile)])
    sc = costs[np.asarray(finals, dtype=np.int64)]
    k = sc.size
    mean = float(sc.mean())
    se = float(sc.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    sq = sc**2
    sq_mean = float(sq.mean())
    sq_se = float(sq.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    if opt <= 1e-9:
        bad = bool(np.any(sc > 1e-9))
        dist = math.inf if bad else 1.0
        return McSummary(k, mean, se, opt, dist, 0.0, dist, 0.0)
    return McSummary(k, mean, se, opt, mean / opt, se / opt, sq_mean / opt**2, sq_se / opt**2)
