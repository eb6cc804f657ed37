"""Nash bargaining between two agents with a disagreement point.

Agents bargain over a finite set of alternatives; their utility is negative
distance to their bliss point.  The outcome maximizes the product of the two
utility gains over the disagreement point among individually rational
alternatives.  Ties go to the alternative nearest the disagreement point and
then to the lowest index, so a zero best product yields the disagreement
point itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seqdelib.median_graph import MedianGraph
from seqdelib.metric_core import TOL, AgentProfile, DomainError, FiniteMetric, generalized_median

# number of (bargain, candidate) cells evaluated per vectorized block
_BLOCK_CELLS = 1 << 22


@dataclass(frozen=True)
class BargainOutcome:
    point: int
    nash_product: float
    gain_u: float
    gain_v: float
    tie_count: int

    @property
    def gains(self) -> tuple[float, float]:
        return self.gain_u, self.gain_v


def _check_points(space: FiniteMetric, *pts) -> None:
    for p in pts:
        space.check_point(p)


def bargain_points(space: FiniteMetric, pu, pv, a) -> np.ndarray:
    """Vectorized Nash bargaining outcomes for broadcastable index arrays."""
    pu, pv, a = np.broadcast_arrays(
        np.asarray(pu, dtype=np.int64), np.asarray(pv, dtype=np.int64), np.asarray(a, dtype=np.int64)
    )
    shape = pu.shape
    pu, pv, a = pu.ravel(), pv.ravel(), a.ravel()
    out = np.empty(pu.size, dtype=np.int64)
    step = max(1, _BLOCK_CELLS // max(space.n, 1))
    for lo in range(0, pu.size, step):
        hi = lo + step
        out[lo:hi] = _bargain_block(space.dist, pu[lo:hi], pv[lo:hi], a[lo:hi])[0]
    return out.reshape(shape)


def _bargain_block(d: np.ndarray, pu: np.ndarray, pv: np.ndarray, a: np.ndarray):
    du, dv, da = d[pu], d[pv], d[a]
    gu = d[pu, a][:, None] - du
    gv = d[pv, a][:, None] - dv
    feasible = (gu >= -TOL) & (gv >= -TOL)
    prod = np.where(feasible, np.maximum(gu, 0.0) * np.maximum(gv, 0.0), -np.inf)
    best = prod.max(axis=1)
    tied = prod >= (best - TOL)[:, None]
    near = np.where(tied, da, np.inf)
    closest = near.min(axis=1)
    # argmax returns the first (lowest-index) True
    pick = np.argmax(tied & (near <= (closest + TOL)[:, None]), axis=1)
    return pick, prod, tied


def nash_bargain(space: FiniteMetric, p_u: int, p_v: int, a: int) -> BargainOutcome:
    """Exhaustive Nash bargaining over every point of ``space``."""
    _check_points(space, p_u, p_v, a)
    pick, prod, tied = _bargain_block(space.dist, np.array([p_u]), np.array([p_v]), np.array([a]))
    o = int(pick[0])
    d = space.dist
    gu = float(d[p_u, a] - d[p_u, o])
    gv = float(d[p_v, a] - d[p_v, o])
    return BargainOutcome(o, float(prod[0, o]), gu, gv, int(tied[0].sum()))


class BargainCache:
    """Memoized bargaining outcomes on a fixed space, filled lazily in batches.

    Monte Carlo runs on general metrics revisit the same ``(p_u, p_v, a)``
    triples many times; each distinct triple is solved once.
    """

    def __init__(self, space: FiniteMetric):
        self.space = space
        self._keys = np.empty(0, dtype=np.int64)
        self._vals = np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return self._keys.size

    def lookup(self, pu, pv, a) -> np.ndarray:
        n = self.space.n
        pu, pv, a = np.broadcast_arrays(
            np.asarray(pu, dtype=np.int64), np.asarray(pv, dtype=np.int64), np.asarray(a, dtype=np.int64)
        )
        keys = (pu * n + pv) * n + a
        uniq = np.unique(keys)
        known = np.isin(uniq, self._keys, assume_unique=True)
        fresh = uniq[~known]
        if fresh.size:
            fa = fresh % n
            fv = (fresh // n) % n
            fu = fresh // (n * n)
            vals = bargain_points(self.space, fu, fv, fa)
            keys_all = np.concatenate([self._keys, fresh])
            vals_all = np.concatenate([self._vals, vals])
            order = np.argsort(keys_all)
            self._keys, self._vals = keys_all[order], vals_all[order]
        pos = np.searchsorted(self._keys, keys)
        return self._vals[pos]


def nash_bargain_median(g: MedianGraph, p_u: int, p_v: int, a: int) -> int:
    """On a median graph the bargain is the triple median of the two bliss points and ``a``."""
    for v in (p_u, p_v, a):
        g.check_vertex(v)
    return int(g.medians(p_u, p_v, a))


def split_position(d_ij: float, d_ia: float, d_ja: float) -> float:
    """Distance from ``p_i`` of the bargain on a continuously populated ``p_i``-``p_j`` geodesic.

    Maximizing ``(d_ia - x) * (d_ja - (d_ij - x))`` gives
    ``x = d_ij / 2 + (d_ia - d_ja) / 2``, clamped to the segment.
    """
    x = d_ij / 2 + (d_ia - d_ja) / 2
    return float(min(max(x, 0.0), d_ij))


def geodesic_split_position(space: FiniteMetric, p_i: int, p_j: int, a: int) -> float:
    _check_points(space, p_i, p_j, a)
    d = space.dist
    return split_position(float(d[p_i, p_j]), float(d[p_i, a]), float(d[p_j, a]))


def check_simplex_point(a, tol: float = 1e-9) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise DomainError("simplex point must be a nonempty vector")
    if np.any(a < -tol) or abs(a.sum() - 1.0) > tol:
        raise DomainError("point is not in the standard simplex")
    return a


def simplex_bargain(i: int, j: int, a) -> np.ndarray:
    """Bargain between agents at simplex vertices ``e_i`` and ``e_j`` (L1 metric)."""
    a = check_simplex_point(a)
    d = a.size
    for k in (i, j):
        if not 0 <= k < d:
            raise DomainError(f"vertex {k} outside 0..{d - 1}")
    o = np.zeros(d)
    if i == j:
        o[i] = 1.0
        return o
    o[i] = (1 + a[i] - a[j]) / 2
    o[j] = (1 + a[j] - a[i]) / 2
    return o


def nperson_line_bargain(x: float) -> float:
    """Bargaining among agents split between the endpoints of ``[0, 1]`` keeps the disagreement point."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"disagreement point {x} outside [0, 1]")
    return x


@dataclass(frozen=True)
class BargainCheckRecord:
    """Distances to the social optimum for one bargain and the resulting bound check.

    ``z_i``, ``z_j``, ``z_u`` are distances from the bargainers' and a third
    agent's bliss points to the generalized median; ``z_a`` is the
    disagreement point's distance to it.
    """

    z_u: float
    z_i: float
    z_j: float
    z_a: float
    realized: float
    outcome: int

    @property
    def bound(self) -> float:
        return self.z_u + 2 * min(self.z_i, self.z_j) + min(self.z_a, max(self.z_i, self.z_j))

    @property
    def holds(self) -> bool:
        return self.realized <= self.bound + TOL


def lemma7_check(space: FiniteMetric, profile: AgentProfile, i: int, j: int, u: int, a: int) -> BargainCheckRecord:
    """Check a third agent's distance to a bargain against optimum-relative distances.

    ``i``, ``j``, ``u`` are bliss points (the two bargainers and an observer)
    and ``a`` is the disagreement point.
    """
    _check_points(space, i, j, u, a)
    opt = generalized_median(space, profile)
    d = space.dist
    o = nash_bargain(space, i, j, a).point
    return BargainCheckRecord(
        z_u=float(d[u, opt]),
        z_i=float(d[i, opt]),
        z_j=float(d[j, opt]),
        z_a=float(d[a, opt]),
        realized=float(d[o, u]),
        outcome=o,
    )
