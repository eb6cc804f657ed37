"""Median graphs: recognition, triple medians, hypercube embeddings, closures.

Vertices are ``0..n-1`` and edges have unit length.  Embeddings come from the
Djokovic-Winkler relation: every Theta-class of edges is one hypercube
coordinate, oriented so that vertex 0 maps to the all-zero vector.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, NamedTuple, Optional, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from seqdelib.metric_core import AgentProfile, DomainError, FiniteMetric


class NotMedianGraphError(DomainError):
    """Raised when a triple has no median or more than one."""

    def __init__(self, message: str, triple: Optional[tuple[int, int, int]] = None):
        super().__init__(message)
        self.triple = triple


class UnitGraph:
    """Connected simple undirected graph with unit edge lengths."""

    def __init__(self, n: int, edges: Iterable[Sequence[int]], *, _dist: Optional[np.ndarray] = None):
        if n < 1:
            raise DomainError("graph needs at least one vertex")
        norm = set()
        for e in edges:
            u, v = int(e[0]), int(e[1])
            if u == v:
                raise DomainError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise DomainError(f"edge ({u}, {v}) outside 0..{n - 1}")
            norm.add((min(u, v), max(u, v)))
        self.n = n
        self.edges: tuple[tuple[int, int], ...] = tuple(sorted(norm))
        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self.adj = tuple(tuple(sorted(a)) for a in adj)
        if _dist is None:
            self.dist = self._distances()
        else:
            self.dist = _dist
            self.dist.setflags(write=False)

    def _distances(self) -> np.ndarray:
        if self.n == 1:
            d = np.zeros((1, 1), dtype=np.int64)
        else:
            rows = [e[0] for e in self.edges]
            cols = [e[1] for e in self.edges]
            a = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n)).tocsr()
            ncomp, _ = connected_components(a, directed=False)
            if ncomp != 1:
                raise DomainError(f"graph is disconnected ({ncomp} components)")
            d = shortest_path(a, directed=False, unweighted=True).astype(np.int64)
        d.setflags(write=False)
        return d

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, m={len(self.edges)})"

    def metric(self) -> FiniteMetric:
        return FiniteMetric(self.dist.astype(float))

    def check_vertex(self, v) -> int:
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, np.integer)) or not 0 <= v < self.n:
            raise DomainError(f"vertex {v!r} outside 0..{self.n - 1}")
        return int(v)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


def _interval_mask(dist: np.ndarray, u: int, v: int) -> np.ndarray:
    return dist[u] + dist[v] == dist[u, v]


def _median_candidates(dist: np.ndarray, u: int, v: int, w: int) -> np.ndarray:
    mask = _interval_mask(dist, u, v) & _interval_mask(dist, u, w) & _interval_mask(dist, v, w)
    return np.flatnonzero(mask)


class MedianVerdict(NamedTuple):
    is_median: bool
    counterexample: Optional[tuple[int, int, int]] = None
    median_count: Optional[int] = None

    def __bool__(self) -> bool:
        return self.is_median


def verify_median_graph(g: UnitGraph) -> MedianVerdict:
    """Exhaustively check that every vertex triple has exactly one median.

    On failure the lexicographically first offending triple is reported along
    with how many medians it has (0 or >= 2).
    """
    d = g.dist
    # between[v, w, m]: m lies on a shortest v-w path
    between = d[:, None, :] + d[None, :, :] == d[:, :, None]
    for u in range(g.n):
        bu = between[u]
        counts = np.count_nonzero(bu[:, None, :] & bu[None, :, :] & between, axis=2)
        bad = np.argwhere(counts != 1)
        if bad.size:
            v, w = (int(x) for x in bad[0])
            return MedianVerdict(False, (u, v, w), int(counts[v, w]))
    return MedianVerdict(True)


class MedianGraph(UnitGraph):
    """A :class:`UnitGraph` whose triples all have unique medians.

    Construction runs the exhaustive verifier unless ``check=False`` is passed
    by a caller that already knows the property holds.
    """

    def __init__(
        self, n: int, edges: Iterable[Sequence[int]], *, check: bool = True, _dist: Optional[np.ndarray] = None
    ):
        super().__init__(n, edges, _dist=_dist)
        if check:
            verdict = verify_median_graph(self)
            if not verdict:
                raise NotMedianGraphError(
                    f"triple {verdict.counterexample} has {verdict.median_count} medians",
                    verdict.counterexample,
                )

    @classmethod
    def from_graph(cls, g: UnitGraph) -> "MedianGraph":
        if isinstance(g, MedianGraph):
            return g
        return cls(g.n, g.edges)

    @cached_property
    def embedding(self) -> "HypercubeEmbedding":
        return hypercube_embed(self)

    def medians(self, x, y, z) -> np.ndarray:
        """Vectorized triple medians (broadcasting over the three index arrays)."""
        return self.embedding.medians(x, y, z)

    @cached_property
    def median_table(self) -> np.ndarray:
        """Full ``n x n x n`` table of triple medians."""
        idx = np.arange(self.n)
        table = self.medians(idx[:, None, None], idx[None, :, None], idx[None, None, :])
        table.setflags(write=False)
        return table


def triple_median(g: UnitGraph, u: int, v: int, w: int) -> int:
    """The unique vertex on shortest paths between all three pairs."""
    u, v, w = (g.check_vertex(x) for x in (u, v, w))
    cands = _median_candidates(g.dist, u, v, w)
    if cands.size != 1:
        raise NotMedianGraphError(
            f"not a median graph: triple ({u}, {v}, {w}) has {cands.size} medians", (u, v, w)
        )
    return int(cands[0])


@dataclass(frozen=True, eq=False)
class HypercubeEmbedding:
    """Isometric map of a median graph into ``{0,1}^dim``."""

    dim: int
    coords: np.ndarray  # (n, dim) uint8

    def __post_init__(self) -> None:
        c = np.asarray(self.coords, dtype=np.uint8)
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def hamming(self, u: int, v: int) -> int:
        return int(np.count_nonzero(self.coords[u] != self.coords[v]))

    def hamming_matrix(self) -> np.ndarray:
        c = self.coords.astype(np.int64)
        return c @ (1 - c).T + (1 - c) @ c.T

    def bitstring(self, v: int) -> str:
        return "".join(str(int(b)) for b in self.coords[v])

    @cached_property
    def _keys(self) -> Optional[np.ndarray]:
        if self.dim > 64:
            return None
        weights = np.left_shift(np.uint64(1), np.arange(self.dim, dtype=np.uint64))
        return (self.coords.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)

    @cached_property
    def _sorted_keys(self) -> tuple[np.ndarray, np.ndarray]:
        order = np.argsort(self._keys, kind="stable")
        return self._keys[order], order

    @cached_property
    def _bytes_index(self) -> dict[bytes, int]:
        return {self.coords[v].tobytes(): v for v in range(self.n)}

    def vertex_of(self, bits) -> Optional[int]:
        """Vertex whose image is ``bits``, or None when the image misses it."""
        return self._bytes_index.get(np.asarray(bits, dtype=np.uint8).tobytes())

    def majority(self, u: int, v: int, w: int) -> np.ndarray:
        c = self.coords
        return ((c[u].astype(np.int16) + c[v] + c[w]) >= 2).astype(np.uint8)

    def medians(self, x, y, z) -> np.ndarray:
        """Vertices whose images are the bitwise majority of the three inputs."""
        x, y, z = np.broadcast_arrays(np.asarray(x), np.asarray(y), np.asarray(z))
        keys = self._keys
        if keys is None:
            out = np.empty(x.shape, dtype=np.int64)
            for idx in np.ndindex(x.shape):
                m = self.vertex_of(self.majority(x[idx], y[idx], z[idx]))
                if m is None:
                    raise NotMedianGraphError("majority image is not a vertex")
                out[idx] = m
            return out
        kx, ky, kz = keys[x], keys[y], keys[z]
        maj = (kx & ky) | (ky & kz) | (kx & kz)
        skeys, order = self._sorted_keys
        pos = np.searchsorted(skeys, maj)
        pos = np.minimum(pos, skeys.size - 1)
        if not np.array_equal(skeys[pos], maj):
            raise NotMedianGraphError("majority image is not a vertex")
        return order[pos].astype(np.int64)

    def to_json(self) -> dict:
        return {"dim": self.dim, "coords": {str(v): self.bitstring(v) for v in range(self.n)}}


def theta_classes(g: UnitGraph) -> np.ndarray:
    """Label every edge (in ``g.edges`` order) by its Djokovic-Winkler class.

    Edges ``uv`` and ``xy`` are related iff ``d(u,x)+d(v,y) != d(u,y)+d(v,x)``;
    labels are numbered in order of each class's first edge.
    """
    m = len(g.edges)
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    e = np.array(g.edges)
    U, V = e[:, 0], e[:, 1]
    d = g.dist
    rel = d[U[:, None], U[None, :]] + d[V[:, None], V[None, :]] != d[U[:, None], V[None, :]] + d[V[:, None], U[None, :]]
    _, raw = connected_components(coo_matrix(rel), directed=False)
    relabel: dict[int, int] = {}
    out = np.empty(m, dtype=np.int64)
    for i, lab in enumerate(raw):
        out[i] = relabel.setdefault(int(lab), len(relabel))
    return out


def hypercube_embed(g: UnitGraph) -> HypercubeEmbedding:
    """Isometric hypercube embedding with one coordinate per Theta-class."""
    if not isinstance(g, MedianGraph):
        g = MedianGraph.from_graph(g)
    labels = theta_classes(g)
    dim = int(labels.max()) + 1 if labels.size else 0
    coords = np.zeros((g.n, dim), dtype=np.uint8)
    d = g.dist
    for k in range(dim):
        u, v = g.edges[int(np.flatnonzero(labels == k)[0])]
        nearer_v = d[:, v] < d[:, u]
        coords[:, k] = nearer_v != nearer_v[0]
    emb = HypercubeEmbedding(dim, coords)
    if not np.array_equal(emb.hamming_matrix(), d):
        raise NotMedianGraphError("Theta-class coordinates are not isometric")
    return emb


def median_table_by_distance(g: UnitGraph) -> np.ndarray:
    """Triple medians from distances alone (no embedding); -1 marks a missing or non-unique median."""
    d = g.dist
    between = d[:, None, :] + d[None, :, :] == d[:, :, None]
    out = np.empty((g.n, g.n, g.n), dtype=np.int64)
    for u in range(g.n):
        bu = between[u]
        mask = bu[:, None, :] & bu[None, :, :] & between
        first = np.argmax(mask, axis=2)
        unique = np.count_nonzero(mask, axis=2) == 1
        out[u] = np.where(unique, first, -1)
    return out


def all_triples_commute(g: MedianGraph) -> bool:
    """Exhaustive commutation check: graph medians versus bitwise majority of images."""
    return bool(np.array_equal(median_table_by_distance(g), g.median_table))


def embedding_median_commutes(g: UnitGraph, emb: HypercubeEmbedding, u: int, v: int, w: int) -> bool:
    """Whether the image of the graph median equals the bitwise majority of the images."""
    m = triple_median(g, u, v, w)
    return bool(np.array_equal(emb.coords[m], emb.majority(u, v, w)))


@dataclass(frozen=True)
class MedianClosure:
    """Least superset of the bliss points closed under ``v -> median(x, y, v)``.

    ``parent`` maps each non-seed member to ``(previous point, x, y)``; the
    seeds map to None.
    """

    members: tuple[int, ...]
    seeds: tuple[int, ...]
    parent: dict

    def __contains__(self, v) -> bool:
        return v in self.parent

    def __len__(self) -> int:
        return len(self.members)

    def derivation(self, v: int) -> tuple[int, tuple[tuple[int, int], ...]]:
        """A seed ``z`` and bliss pairs whose nested medians starting at ``z`` give ``v``."""
        steps = []
        while self.parent[v] is not None:
            prev, x, y = self.parent[v]
            steps.append((x, y))
            v = prev
        return v, tuple(reversed(steps))


def median_closure(g: MedianGraph, profile: AgentProfile) -> MedianClosure:
    """Worklist fixpoint of pair-medians seeded with the bliss points."""
    if not isinstance(g, MedianGraph):
        g = MedianGraph.from_graph(g)
    if profile.points.max() >= g.n:
        raise DomainError("bliss point outside the graph")
    bliss = np.unique(profile.points)
    parent: dict[int, Optional[tuple[int, int, int]]] = {int(b): None for b in bliss}
    queue = deque(int(b) for b in bliss)
    bx, by = bliss[:, None], bliss[None, :]
    while queue:
        v = queue.popleft()
        meds = g.medians(bx, by, v)
        for i, j in np.ndindex(meds.shape):
            m = int(meds[i, j])
            if m not in parent:
                parent[m] = (v, int(bliss[i]), int(bliss[j]))
                queue.append(m)
    return MedianClosure(tuple(sorted(parent)), tuple(int(b) for b in bliss), parent)


# -- generators ---------------------------------------------------------------


def star(k: int) -> MedianGraph:
    """Center 0 joined to leaves ``1..k``."""
    if k < 1:
        raise DomainError("star needs at least one leaf")
    return MedianGraph(k + 1, [(0, i) for i in range(1, k + 1)], check=False)


def path(n: int) -> MedianGraph:
    if n < 1:
        raise DomainError("path needs at least one vertex")
    return MedianGraph(n, [(i, i + 1) for i in range(n - 1)], check=False)


def grid(w: int, h: int) -> MedianGraph:
    """``w x h`` grid; vertex ``(x, y)`` has index ``y * w + x``."""
    if w < 1 or h < 1:
        raise DomainError("grid sides must be >= 1")
    edges = []
    for y in range(h):
        for x in range(w):
            v = y * w + x
            if x + 1 < w:
                edges.append((v, v + 1))
            if y + 1 < h:
                edges.append((v, v + w))
    return MedianGraph(w * h, edges, check=False)


def hypercube(dim: int) -> MedianGraph:
    """``{0,1}^dim``; vertex ``i`` is the bit vector of ``i`` (bit k = coordinate k)."""
    if dim < 0:
        raise DomainError("dimension must be >= 0")
    n = 1 << dim
    edges = [(i, i ^ (1 << b)) for i in range(n) for b in range(dim) if not i & (1 << b)]
    return MedianGraph(n, edges, check=False)


def random_tree(n: int, seed) -> MedianGraph:
    """Uniform random labeled tree on ``n`` vertices (Pruefer decoding)."""
    if n < 1:
        raise DomainError("tree needs at least one vertex")
    if n <= 2:
        return path(n)
    rng = np.random.default_rng(seed)
    seq = rng.integers(0, n, size=n - 2).tolist()
    t = nx.from_prufer_sequence(seq)
    return MedianGraph(n, t.edges(), check=False)


def random_grid_subset(w: int, h: int, seed) -> MedianGraph:
    """Random staircase (Young-diagram) region of the ``w x h`` grid.

    Row ``y`` keeps columns ``0..len_y - 1`` with non-increasing lengths and
    ``len_0 = w``; such down-sets are distributive lattices, hence median.
    Vertices are numbered row by row.
    """
    if w < 1 or h < 1:
        raise DomainError("grid sides must be >= 1")
    rng = np.random.default_rng(seed)
    lengths = [w]
    for _ in range(1, h):
        lengths.append(int(rng.integers(1, lengths[-1] + 1)))
    index = {}
    for y, ln in enumerate(lengths):
        for x in range(ln):
            index[(x, y)] = len(index)
    edges = []
    for (x, y), v in index.items():
        for nb in ((x + 1, y), (x, y + 1)):
            if nb in index:
                edges.append((v, index[nb]))
    return MedianGraph(len(index), edges)


def grid_closure_example() -> tuple[MedianGraph, AgentProfile]:
    """3x3 grid with five bliss points whose closure misses only corner (2, 2).

    Bliss points at (x, y) = (0,0), (0,2), (1,2), (2,0), (2,1).
    """
    g = grid(3, 3)
    pts = [y * 3 + x for x, y in [(0, 0), (0, 2), (1, 2), (2, 0), (2, 1)]]
    return g, AgentProfile.one_per_point(pts)


# -- exhaustive enumeration by convex expansion --------------------------------


def _bitmask_intervals(dist: np.ndarray) -> np.ndarray:
    n = dist.shape[0]
    inside = dist[:, None, :] + dist[None, :, :] == dist[:, :, None]
    return (inside.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=2)


def _convex_sets(dist: np.ndarray) -> np.ndarray:
    n = dist.shape[0]
    intervals = _bitmask_intervals(dist)
    sets = np.arange(1, 1 << n, dtype=np.int64)
    ok = np.ones(sets.size, dtype=bool)
    for u, v in itertools.combinations(range(n), 2):
        both = ((sets >> u) & 1).astype(bool) & ((sets >> v) & 1).astype(bool)
        iv = intervals[u, v]
        ok &= ~both | ((sets & iv) == iv)
    return sets[ok]


def _neighbourhoods(n: int, adj: Sequence[Sequence[int]]) -> np.ndarray:
    sets = np.arange(1 << n, dtype=np.int64)
    nb = np.zeros(1 << n, dtype=np.int64)
    for v in range(n):
        mask = sum(1 << u for u in adj[v])
        nb[((sets >> v) & 1).astype(bool)] |= mask
    return nb


def _expand(g: UnitGraph, a: int, b: int) -> tuple[int, list[tuple[int, int]], np.ndarray]:
    """Expansion along the cover ``(a, b)``: the copy of ``a & b`` joins the ``b`` side.

    Distances need no search: a pair on opposite sides is one step further
    apart than its preimages.
    """
    shared = [v for v in range(g.n) if (a >> v) & 1 and (b >> v) & 1]
    copy = {v: g.n + i for i, v in enumerate(shared)}
    n = g.n + len(shared)
    origin = np.array(list(range(g.n)) + shared)
    side_b = np.array([not (a >> v) & 1 for v in range(g.n)] + [True] * len(shared))
    dist = g.dist[origin[:, None], origin[None, :]] + (side_b[:, None] != side_b[None, :])
    edges = []
    for u, v in g.edges:
        in_a = (a >> u) & 1 and (a >> v) & 1
        in_b = (b >> u) & 1 and (b >> v) & 1
        if in_a:
            edges.append((u, v))
        if in_b:
            edges.append((copy.get(u, u), copy.get(v, v)))
    edges.extend((v, copy[v]) for v in shared)
    return n, edges, dist


def _invariant(g: UnitGraph) -> tuple:
    rows = sorted(tuple(sorted(r)) for r in g.dist.tolist())
    return (g.n, len(g.edges), tuple(rows))


def enumerate_median_graphs(max_n: int) -> list[MedianGraph]:
    """Every median graph on at most ``max_n`` vertices, one per isomorphism class.

    Uses the convex expansion theorem: each median graph arises from a smaller
    one by expanding along a cover by two convex sets with nonempty
    intersection and no edges between the two set differences.  Graphs are
    returned ordered by vertex count.
    """
    return list(_enumerate_cached(max_n))


@lru_cache(maxsize=4)
def _enumerate_cached(max_n: int) -> tuple[MedianGraph, ...]:
    if max_n < 1:
        return ()
    if max_n > 16:
        raise DomainError("exhaustive enumeration is limited to 16 vertices")
    levels: dict[int, list[MedianGraph]] = {n: [] for n in range(1, max_n + 1)}
    buckets: dict[tuple, list[nx.Graph]] = {}

    def add(g: MedianGraph) -> None:
        key = _invariant(g)
        h = g.to_networkx()
        for other in buckets.get(key, []):
            if nx.vf2pp_is_isomorphic(h, other):
                return
        buckets.setdefault(key, []).append(h)
        levels[g.n].append(g)

    add(MedianGraph(1, [], check=False))
    for n in range(1, max_n):
        for g in levels[n]:
            full = (1 << n) - 1
            convex = _convex_sets(g.dist)
            nb = _neighbourhoods(n, g.adj)
            for ia, a in enumerate(convex):
                b = convex[ia:]
                shared = a & b
                ok = ((a | b) == full) & (shared != 0)
                ok &= (nb[a & ~b] & (b & ~a)) == 0
                for bb in b[ok]:
                    size = n + bin(int(a & bb)).count("1")
                    if size > max_n:
                        continue
                    new_n, edges, dist = _expand(g, int(a), int(bb))
                    add(MedianGraph(new_n, edges, check=False, _dist=dist))
    return tuple(g for n in sorted(levels) for g in levels[n])


def load_embedding_json(text: str) -> HypercubeEmbedding:
    data = json.loads(text)
    coords = data["coords"]
    n = len(coords)
    arr = np.array([[int(ch) for ch in coords[str(v)]] for v in range(n)], dtype=np.uint8)
    return HypercubeEmbedding(int(data["dim"]), arr.reshape(n, int(data["dim"])))
