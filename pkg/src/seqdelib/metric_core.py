"""Finite metric spaces, weighted agent profiles, social cost and distortion.

Points are dense integer indices ``0..n-1``.  Agents are stored as
``(bliss point, integer weight)`` entries so that repeated bliss points and
fractional populations (expressed by scaling) stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

TOL = 1e-9

#: Returned by the distortion functionals when the optimum has zero cost but
#: the distribution puts mass on a costly point.
INFINITE_DISTORTION = math.inf


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def check_metric_axioms(dist: np.ndarray, tol: float = TOL) -> None:
    """Raise :class:`DomainError` unless ``dist`` is a metric within ``tol``."""
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise DomainError(f"distance table must be square, got shape {dist.shape}")
    if not np.all(np.isfinite(dist)):
        raise DomainError("distance table contains non-finite entries")
    n = dist.shape[0]
    if np.any(np.abs(np.diag(dist)) > tol):
        raise DomainError("distance table has a nonzero diagonal")
    if np.any(np.abs(dist - dist.T) > tol):
        raise DomainError("distance table is not symmetric")
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] <= 0):
        raise DomainError("distinct points must be at positive distance")
    for k in range(n):
        via_k = dist[:, k, None] + dist[None, k, :]
        if np.any(dist > via_k + tol):
            i, j = np.argwhere(dist > via_k + tol)[0]
            raise DomainError(f"triangle inequality fails for ({i}, {k}, {j})")


@dataclass(frozen=True, eq=False)
class FiniteMetric:
    """An explicit point set ``0..n-1`` with a distance table."""

    dist: np.ndarray
    names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        dist = np.array(self.dist, dtype=float)
        object.__setattr__(self, "dist", _readonly(dist))
        if self.names is not None and len(self.names) != dist.shape[0]:
            raise DomainError("names must match the number of points")

    @classmethod
    def from_table(cls, dist, names=None, *, check: bool = True) -> "FiniteMetric":
        dist = np.asarray(dist, dtype=float)
        if check:
            check_metric_axioms(dist)
        return cls(dist, None if names is None else tuple(names))

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def check_point(self, a: int) -> int:
        if isinstance(a, (bool, np.bool_)) or not isinstance(a, (int, np.integer)):
            raise DomainError(f"point index must be an integer, got {a!r}")
        if not 0 <= a < self.n:
            raise DomainError(f"point {a} outside 0..{self.n - 1}")
        return int(a)

    def d(self, a: int, b: int) -> float:
        return float(self.dist[a, b])


@dataclass(frozen=True, eq=False)
class AgentProfile:
    """A multiset of bliss points with positive integer weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.int64).reshape(-1)
        if pts.shape != w.shape:
            raise DomainError("points and weights must have equal length")
        if pts.size == 0:
            raise DomainError("profile must contain at least one agent")
        if np.any(w <= 0):
            raise DomainError("agent weights must be positive integers")
        if np.any(pts < 0):
            raise DomainError("bliss points must be nonnegative indices")
        object.__setattr__(self, "points", _readonly(pts.copy()))
        object.__setattr__(self, "weights", _readonly(w.copy()))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[int]]) -> "AgentProfile":
        pairs = [tuple(p) for p in pairs]
        if not pairs:
            raise DomainError("profile must contain at least one agent")
        for p in pairs:
            if len(p) != 2 or int(p[1]) != p[1]:
                raise DomainError(f"agent entry must be (point, integer weight), got {p!r}")
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))

    @classmethod
    def one_per_point(cls, points: Iterable[int]) -> "AgentProfile":
        pts = list(points)
        return cls(np.array(pts), np.ones(len(pts), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.weights.sum())

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct bliss points (sorted) and their aggregated weights."""
        pts, inv = np.unique(self.points, return_inverse=True)
        w = np.zeros(pts.size, dtype=np.int64)
        np.add.at(w, inv, self.weights)
        return pts, w

    def validate_for(self, space: FiniteMetric) -> None:
        if self.points.max() >= space.n:
            raise DomainError(f"bliss point {int(self.points.max())} not in a space of {space.n} points")

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(p), int(w)) for p, w in zip(self.points, self.weights)]


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """A finite distribution over points."""

    support: np.ndarray
    prob: np.ndarray

    def __post_init__(self) -> None:
        sup = np.asarray(self.support, dtype=np.int64).reshape(-1)
        prob = np.asarray(self.prob, dtype=float).reshape(-1)
        if sup.shape != prob.shape or sup.size == 0:
            raise DomainError("support and prob must be nonempty and parallel")
        if np.any(prob < 0):
            raise DomainError("probabilities must be nonnegative")
        if abs(prob.sum() - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {prob.sum()!r}, not 1")
        object.__setattr__(self, "support", _readonly(sup.copy()))
        object.__setattr__(self, "prob", _readonly(prob.copy()))

    @classmethod
    def point_mass(cls, a: int) -> "OutcomeDistribution":
        return cls(np.array([a]), np.array([1.0]))

    @classmethod
    def from_weights(cls, support, weights) -> "OutcomeDistribution":
        """Normalize nonnegative weights, merging repeated support points."""
        sup = np.asarray(support, dtype=np.int64)
        w = np.asarray(weights, dtype=float)
        pts, inv = np.unique(sup, return_inverse=True)
        agg = np.zeros(pts.size)
        np.add.at(agg, inv, w)
        return cls(pts, agg / agg.sum())

    @classmethod
    def empirical(cls, samples) -> "OutcomeDistribution":
        pts, counts = np.unique(np.asarray(samples, dtype=np.int64), return_counts=True)
        return cls(pts, counts / counts.sum())

    def prob_of(self, a: int) -> float:
        hit = np.nonzero(self.support == a)[0]
        return float(self.prob[hit[0]]) if hit.size else 0.0

    def as_dict(self) -> dict[int, float]:
        return {int(a): float(p) for a, p in zip(self.support, self.prob)}


def social_costs(space: FiniteMetric, profile: AgentProfile) -> np.ndarray:
    """Social cost of every point of ``space`` as a length-n array."""
    profile.validate_for(space)
    return profile.weights.astype(float) @ space.dist[profile.points]


def social_cost(space: FiniteMetric, profile: AgentProfile, a: int) -> float:
    """Weighted sum of distances from every bliss point to ``a``."""
    a = space.check_point(a)
    profile.validate_for(space)
    return float(profile.weights.astype(float) @ space.dist[profile.points, a])


def generalized_median(space: FiniteMetric, profile: AgentProfile) -> int:
    """The social-cost minimizer; ties go to the lowest index."""
    costs = social_costs(space, profile)
    return int(np.flatnonzero(costs <= costs.min() + TOL)[0])


def _check_distribution(space: FiniteMetric, dist: OutcomeDistribution) -> None:
    if dist.support.max() >= space.n:
        raise DomainError(f"support point {int(dist.support.max())} outside the space")


def _ratio(num: float, opt: float, costly_mass: bool) -> float:
    if opt <= TOL:
        return INFINITE_DISTORTION if costly_mass else 1.0
    return num / opt


def distortion(space: FiniteMetric, profile: AgentProfile, dist: OutcomeDistribution) -> float:
    """Expected social cost under ``dist`` over the optimal social cost.

    When the optimum has zero cost (every agent shares one bliss point) the
    result is 1 if ``dist`` only uses zero-cost points and
    :data:`INFINITE_DISTORTION` otherwise.
    """
    _check_distribution(space, dist)
    costs = social_costs(space, profile)
    sc = costs[dist.support]
    opt = costs[generalized_median(space, profile)]
    return _ratio(float(dist.prob @ sc), opt, bool(np.any((sc > TOL) & (dist.prob > 0))))


def squared_distortion(space: FiniteMetric, profile: AgentProfile, dist: OutcomeDistribution) -> float:
    """``E[SC(a)^2] / SC(a*)^2`` with the same zero-optimum handling as :func:`distortion`."""
    _check_distribution(space, dist)
    costs = social_costs(space, profile)
    sc = costs[dist.support]
    opt = costs[generalized_median(space, profile)]
    return _ratio(float(dist.prob @ sc**2), opt**2, bool(np.any((sc > TOL) & (dist.prob > 0))))


def is_pareto_dominated(space: FiniteMetric, profile: AgentProfile, a: int) -> Optional[int]:
    """Lowest-index point that weakly improves every agent and strictly improves one.

    Returns ``None`` when ``a`` is ex-post Pareto efficient.
    """
    a = space.check_point(a)
    profile.validate_for(space)
    bliss = np.unique(profile.points)
    cur = space.dist[a, bliss]
    cand = space.dist[:, bliss]
    weak = np.all(cand <= cur + TOL, axis=1)
    strict = np.any(cand < cur - TOL, axis=1)
    hits = np.flatnonzero(weak & strict)
    return int(hits[0]) if hits.size else None


def metric_from_weighted_graph(edges: Iterable[Sequence[float]], n: int) -> FiniteMetric:
    """All-pairs shortest-path metric of a connected weighted graph.

    ``edges`` holds ``(i, j, weight)`` triples with positive weights; parallel
    edges keep the lightest weight.
    """
    edges = [tuple(e) for e in edges]
    if n < 1:
        raise DomainError("graph needs at least one vertex")
    best: dict[tuple[int, int], float] = {}
    for e in edges:
        if len(e) != 3:
            raise DomainError(f"edge must be (i, j, weight), got {e!r}")
        i, j, w = int(e[0]), int(e[1]), float(e[2])
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise DomainError(f"bad edge endpoints ({i}, {j}) for n={n}")
        if not w > 0:
            raise DomainError(f"edge weight must be positive, got {w}")
        key = (min(i, j), max(i, j))
        best[key] = min(w, best.get(key, math.inf))
    if n == 1:
        return FiniteMetric(np.zeros((1, 1)))
    rows = [k[0] for k in best]
    cols = [k[1] for k in best]
    adj = coo_matrix((list(best.values()), (rows, cols)), shape=(n, n)).tocsr()
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise DomainError(f"graph is disconnected ({ncomp} components)")
    dist = shortest_path(adj, method="D", directed=False)
    return FiniteMetric(dist)
