"""Lower-bound constructions, ratio curves and distortion experiments.

Includes the simplex budgeting model, where agents sit at simplex vertices,
outcomes are fractional allocations and an agent at vertex ``i`` pays
``1 - x_i`` for allocation ``x`` (half the L1 distance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist
from scipy.sparse.csgraph import minimum_spanning_tree, shortest_path

from seqdelib.bargaining import check_simplex_point
from seqdelib.deliberation import (
    McSummary,
    Space,
    dim_cost_ratio,
    run_chunked,
    simulate_finals,
    summarize_finals,
)
from seqdelib.median_graph import MedianGraph, hypercube, path, star
from seqdelib.metric_core import AgentProfile, DomainError, FiniteMetric, metric_from_weighted_graph

# -- ratio curves --------------------------------------------------------------


def oligarch_ratio(p: float) -> float:
    """Cost ratio of one-shot triple medians on random hypercube profiles with bit density ``p``."""
    return 4 * p**3 - 8 * p**2 + 3 * p + 1


def shortest_path_ratio(p: float) -> float:
    """Cost ratio of mechanisms restricted to shortest paths between two bliss points."""
    return -2 * p**2 + p + 1


@dataclass(frozen=True)
class CurveMax:
    argmax: float
    value: float


@dataclass(frozen=True)
class LowerBoundCurve:
    name: str
    func: Callable[[float], float] = field(repr=False)
    lo: float = 0.0
    hi: float = 0.5

    def __call__(self, p: float) -> float:
        return self.func(p)

    def maximize(self, grid_points: int = 100_001) -> CurveMax:
        """Bounded scalar maximization, confirmed against a dense grid."""
        res = minimize_scalar(lambda x: -self.func(x), bounds=(self.lo, self.hi), method="bounded",
                              options={"xatol": 1e-12})
        grid = np.linspace(self.lo, self.hi, grid_points)
        vals = np.array([self.func(x) for x in grid])
        k = int(np.argmax(vals))
        if vals[k] > -res.fun + 1e-9:
            # the optimizer missed the basin; polish around the grid maximum
            step = grid[1] - grid[0]
            res = minimize_scalar(lambda x: -self.func(x), bounds=(max(self.lo, grid[k] - step),
                                  min(self.hi, grid[k] + step)), method="bounded", options={"xatol": 1e-12})
        return CurveMax(float(res.x), float(-res.fun))


CURVES = {
    "stationary": LowerBoundCurve("stationary", dim_cost_ratio, 0.0, 0.5),
    "oligarch": LowerBoundCurve("oligarch", oligarch_ratio, 0.0, 0.5),
    "shortest-path": LowerBoundCurve("shortest-path", shortest_path_ratio, 0.0, 0.5),
}


# -- lower-bound instances -----------------------------------------------------


def kstar_instance(k: int) -> tuple[MedianGraph, AgentProfile]:
    """Star with ``k`` leaves and one unit-weight agent on each leaf."""
    if k < 2:
        raise DomainError("k-star instance needs k >= 2")
    return star(k), AgentProfile.one_per_point(range(1, k + 1))


@dataclass(frozen=True, eq=False)
class HypercubeProfile:
    """Agents on ``{0,1}^D`` stored as explicit bit rows (no vertex enumeration)."""

    bits: np.ndarray  # (agents, D) uint8
    weights: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        w = np.asarray(self.weights, dtype=np.int64)
        if bits.ndim != 2 or bits.shape[0] != w.size or w.size == 0 or np.any(w <= 0):
            raise DomainError("bits must be (agents, D) with one positive weight per agent")
        bits.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.bits.shape[1]

    @property
    def total(self) -> int:
        return int(self.weights.sum())

    def fractions(self) -> np.ndarray:
        return self.weights.astype(float) @ self.bits / self.total

    def social_cost(self, point) -> float:
        point = np.asarray(point, dtype=np.uint8)
        return float(self.weights @ np.count_nonzero(self.bits != point, axis=1))

    def opt_cost(self) -> float:
        """Optimal social cost: per-coordinate weighted majority."""
        f = self.fractions()
        return float(self.total * np.minimum(f, 1 - f).sum())

    def oneshot_ones_exact(self) -> float:
        """Mean over coordinates of Pr[median of three random agents has a 1]."""
        f = self.fractions()
        return float(np.mean(3 * f**2 - 2 * f**3))

    def oneshot_ones_distinct(self) -> np.ndarray:
        """Per coordinate, Pr[median of three distinct unit agents has a 1].

        Averaged over random instances each entry equals ``3p^2 - 2p^3``
        exactly, because three distinct agents have independent bits.
        """
        if np.any(self.weights != 1) or self.bits.shape[0] < 3:
            raise DomainError("distinct triples need at least three unit-weight agents")
        n = self.bits.shape[0]
        c = self.bits.sum(axis=0).astype(float)
        ones = c * (c - 1) * (c - 2) / 6 + c * (c - 1) / 2 * (n - c)
        return ones / (n * (n - 1) * (n - 2) / 6)

    def oneshot_expected_cost(self) -> float:
        f = self.fractions()
        q = 3 * f**2 - 2 * f**3
        return float(self.total * np.sum(q * (1 - f) + (1 - q) * f))

    def sample_oneshot(self, replicas: int, seed: int) -> np.ndarray:
        """Bit rows of sampled one-shot triple medians."""
        cum = np.cumsum(self.weights)

        def block(rng: np.random.Generator, size: int) -> np.ndarray:
            idx = [np.searchsorted(cum, rng.integers(0, cum[-1], size), side="right") for _ in range(3)]
            x, y, z = (self.bits[i].astype(np.int16) for i in idx)
            return (x + y + z >= 2).astype(np.uint8)

        return run_chunked(replicas, seed, block)

    def to_median_graph(self) -> tuple[MedianGraph, AgentProfile]:
        """Explicit hypercube and profile; vertex index has bit ``k`` equal to coordinate ``k``."""
        if self.dim > 12:
            raise DomainError("explicit hypercube limited to 12 dimensions")
        idx = self.bits.astype(np.int64) @ (1 << np.arange(self.dim, dtype=np.int64))
        return hypercube(self.dim), AgentProfile(idx, self.weights)


def hypercube_lb_instance(D: int, p: float, n: int, seed: int) -> HypercubeProfile:
    """``n`` unit agents whose bliss bits are independent Bernoulli(``p``)."""
    if D < 1 or n < 1:
        raise DomainError("D and n must be >= 1")
    if not 0.0 < p < 0.5:
        raise DomainError("p must lie in (0, 1/2)")
    rng = np.random.default_rng(seed)
    bits = (rng.random((n, D)) < p).astype(np.uint8)
    return HypercubeProfile(bits, np.ones(n, dtype=np.int64))


def shortcut_vertex(n: int, i: int, j: int) -> int:
    """Index of the shortcut between leaves ``i < j`` (leaves are ``1..n``)."""
    if not 1 <= i < j <= n:
        raise DomainError("need leaves 1 <= i < j <= n")
    a, b = i - 1, j - 1
    return n + 1 + a * (2 * n - a - 1) // 2 + (b - a - 1)


def metric_star_shortcut_instance(n: int, eps: float) -> tuple[FiniteMetric, AgentProfile]:
    """Unit star with centre 0 and leaves ``1..n``; each leaf pair gets a shortcut vertex.

    The shortcut sits at ``1 - eps`` from both of its leaves.  One agent per leaf.
    """
    if n < 3:
        raise DomainError("star-shortcut instance needs n >= 3")
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0, 1)")
    edges: list[tuple[int, int, float]] = [(0, i, 1.0) for i in range(1, n + 1)]
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            s = shortcut_vertex(n, i, j)
            edges.append((i, s, 1.0 - eps))
            edges.append((j, s, 1.0 - eps))
    size = n + 1 + n * (n - 1) // 2
    return metric_from_weighted_graph(edges, size), AgentProfile.one_per_point(range(1, n + 1))


def star_shortcut_ratio(n: int, eps: float) -> float:
    """Social cost of any shortcut vertex over the optimum (the centre)."""
    return (1 - eps) * (3 * n - 4) / n


# -- random finite metrics -------------------------------------------------------

METRIC_KINDS = ("euclidean", "l1", "graph", "tree")


def random_finite_metric(n: int, seed: int, kind: str = "euclidean") -> FiniteMetric:
    """A random metric on ``n`` points.

    ``euclidean``/``l1``: uniform points in the unit square/cube.  ``graph``:
    shortest paths of a complete graph with uniform weights in ``[0.1, 1]``.
    ``tree``: weights of the minimum spanning tree of such a graph.
    """
    if n < 1:
        raise DomainError("metric needs at least one point")
    rng = np.random.default_rng(seed)
    if kind == "euclidean":
        x = rng.random((n, 2))
        dist = cdist(x, x)
    elif kind == "l1":
        x = rng.random((n, 3))
        dist = cdist(x, x, "cityblock")
    elif kind in ("graph", "tree"):
        w = rng.uniform(0.1, 1.0, (n, n))
        w = np.triu(w, 1)
        w = w + w.T
        if kind == "tree":
            w = minimum_spanning_tree(w).toarray()
            w = w + w.T
        dist = shortest_path(w, directed=False)
    else:
        raise DomainError(f"unknown metric kind {kind!r}")
    np.fill_diagonal(dist, 0.0)
    return FiniteMetric.from_table(dist)


def random_profile(n_points: int, seed: int, max_agents: int = 10, max_weight: int = 3) -> AgentProfile:
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_agents + 1))
    return AgentProfile(rng.integers(0, n_points, k), rng.integers(1, max_weight + 1, k))


@dataclass(frozen=True)
class SweepReport:
    rounds: int
    seed: int
    summary: McSummary
    distortion_bound: float = 3.0
    squared_bound: float = 41.0

    @property
    def distortion_ok(self) -> bool:
        s = self.summary
        return s.distortion <= self.distortion_bound + 3 * s.distortion_se

    @property
    def squared_ok(self) -> bool:
        s = self.summary
        return s.squared_distortion <= self.squared_bound + 3 * s.squared_distortion_se

    @property
    def ok(self) -> bool:
        return self.distortion_ok and self.squared_ok


def general_metric_distortion_sweep(
    space: Space, profile: AgentProfile, T: int, replicas: int, seed: int, *, threads: int = 1
) -> SweepReport:
    """Monte Carlo distortion and squared distortion of deliberation after ``T`` rounds."""
    finals = simulate_finals(space, profile, T, replicas, seed, threads=threads)
    return SweepReport(T, seed, summarize_finals(space, profile, finals))


# -- simplex model -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimplexInstance:
    """Agent mass ``p[i]`` at simplex vertex ``i``."""

    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size < 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("vertex masses must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def d(self) -> int:
        return self.p.size

    def opt_cost(self) -> float:
        return float(1 - self.p.max())

    def cost(self, x) -> float:
        """Expected cost of allocation ``x`` for a unit mass of agents."""
        x = check_simplex_point(x)
        return float(self.p @ (1 - x))


def simplex_stationary(inst: SimplexInstance) -> np.ndarray:
    """Long-run expected allocation of every coordinate."""
    p = inst.p
    if np.any(p >= 1.0):
        return (p >= 1.0).astype(float)
    r = p / (1 - p)
    return r / r.sum()


def simplex_distortion(inst: SimplexInstance) -> float:
    s = simplex_stationary(inst)
    opt = inst.opt_cost()
    alg = float(1 - inst.p @ s)
    return 1.0 if opt <= 1e-12 else alg / opt


def simplex_distortion_bound(alpha: float) -> float:
    """Upper bound on simplex distortion when the largest vertex mass is ``alpha``."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    return 1 / (1 - alpha + alpha * alpha)


def simplex_rd_distortion(inst: SimplexInstance) -> float:
    p = inst.p
    opt = inst.opt_cost()
    return 1.0 if opt <= 1e-12 else float(p @ (1 - p)) / opt


def simplex_near_tight(d: int) -> SimplexInstance:
    """Half the mass on one vertex, the rest spread evenly; distortion tends to the bound as ``d`` grows."""
    if d < 2:
        raise DomainError("d must be >= 2")
    p = np.full(d, 0.5 / (d - 1))
    p[0] = 0.5
    return SimplexInstance(p)


@dataclass(frozen=True)
class SimplexSimulation:
    mean: np.ndarray
    se: np.ndarray
    cost: float
    cost_se: float
    sq_cost: float
    sq_cost_se: float


def simplex_simulate(inst: SimplexInstance, T: int, replicas: int, seed: int, *, threads: int = 1) -> SimplexSimulation:
    """Run deliberation on the simplex; report coordinate means of the final allocation."""
    if T < 1:
        raise DomainError("T must be >= 1")
    cum = np.cumsum(inst.p)
    cum[-1] = 1.0
    d = inst.d

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return np.minimum(np.searchsorted(cum, rng.random(size), side="right"), d - 1)

    def block(rng: np.random.Generator, size: int) -> np.ndarray:
        rows = np.arange(size)
        x = np.zeros((size, d))
        x[rows, draw(rng, size)] = 1.0
        for _ in range(T):
            i = draw(rng, size)
            j = draw(rng, size)
            ai, aj = x[rows, i], x[rows, j]
            o = np.zeros((size, d))
            o[rows, i] = (1 + ai - aj) / 2
            o[rows, j] = (1 + aj - ai) / 2
            # i == j leaves 1/2 at e_i; the bargain there is e_i itself
            same = i == j
            o[rows[same], i[same]] = 1.0
            x = o
        return x

    finals = run_chunked(replicas, seed, block, threads)
    k = finals.shape[0]
    costs = 1 - finals @ inst.p
    se = finals.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(d)
    sq = costs**2
    cost_se = float(costs.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    sq_se = float(sq.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return SimplexSimulation(finals.mean(axis=0), se, float(costs.mean()), cost_se, float(sq.mean()), sq_se)


# -- epsilon-unanimous profiles --------------------------------------------------


def epsilon_unanimous_instance(
    g: Union[MedianGraph, FiniteMetric], eps: float, *, majority: int = 0, seed: Optional[int] = None,
    max_denominator: int = 10_000,
) -> AgentProfile:
    """Profile with weight ``1 - eps`` on ``majority`` and ``eps`` spread over other points.

    ``eps`` is taken as an exact fraction; minority units go round-robin over
    the other points in index order, or to uniformly random other points
    when ``seed`` is given.
    """
    frac = Fraction(eps).limit_denominator(max_denominator)
    if not 0 < frac < Fraction(1, 2):
        raise DomainError("eps must lie in (0, 1/2)")
    n = g.n
    if n < 2:
        raise DomainError("need at least two points")
    if not 0 <= majority < n:
        raise DomainError(f"majority point {majority} outside the space")
    minority = frac.numerator
    total = frac.denominator
    others = [v for v in range(n) if v != majority]
    if seed is None:
        spots = [others[k % len(others)] for k in range(minority)]
    else:
        rng = np.random.default_rng(seed)
        spots = [others[int(k)] for k in rng.integers(0, len(others), minority)]
    pts, counts = np.unique(np.array(spots, dtype=np.int64), return_counts=True)
    return AgentProfile(
        np.concatenate([[majority], pts]), np.concatenate([[total - minority], counts])
    )


def two_point_space() -> MedianGraph:
    return path(2)


def fraction_profile(f: float, max_denominator: int = 10_000) -> AgentProfile:
    """Two-point profile with weight fraction ``f`` on point 1 and the rest on point 0."""
    frac = Fraction(f).limit_denominator(max_denominator)
    if not 0 < frac < 1:
        raise DomainError("f must lie in (0, 1)")
    return AgentProfile(np.array([0, 1]), np.array([frac.denominator - frac.numerator, frac.numerator]))


def rd_two_point_squared(f: float) -> float:
    """Squared distortion of random dictatorship on the two-point family (closed form)."""
    return (1 - f) ** 2 / f + (1 - f)
