from __future__ import annotations

import itertools
import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqdelib import median_graph as mg
from seqdelib.metric_core import AgentProfile, DomainError

from conftest import brute_medians, floyd_warshall

# number of unlabeled trees on n = 1..12 vertices (standard enumeration)
TREE_COUNTS = [1, 1, 1, 2, 3, 6, 11, 23, 47, 106, 235, 551]


def test_triple_median_examples():
    s = mg.star(3)
    assert mg.triple_median(s, 1, 2, 3) == 0
    q = mg.hypercube(3)
    # vertex index bits: coordinate k is bit k; 000, 011, 101 -> 001
    v = lambda bits: sum(int(b) << k for k, b in enumerate(bits))
    assert mg.triple_median(q, v("000"), v("011"), v("101")) == v("001")
    for u, w in itertools.product(range(8), repeat=2):
        assert mg.triple_median(q, u, u, w) == u


def test_triple_median_errors():
    c4_chord = mg.UnitGraph(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    with pytest.raises(mg.NotMedianGraphError):
        mg.triple_median(c4_chord, 0, 1, 2)
    with pytest.raises(DomainError):
        mg.triple_median(mg.star(2), 0, 1, 5)


def test_verify_examples():
    assert mg.verify_median_graph(mg.grid(2, 3))
    c3 = mg.verify_median_graph(mg.UnitGraph(3, [(0, 1), (1, 2), (0, 2)]))
    assert not c3 and c3.counterexample == (0, 1, 2) and c3.median_count == 0
    assert mg.verify_median_graph(mg.UnitGraph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))
    k23 = mg.UnitGraph(5, [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)])
    v = mg.verify_median_graph(k23)
    assert not v and v.median_count >= 2


def test_median_graph_rejects_non_median():
    with pytest.raises(mg.NotMedianGraphError) as info:
        mg.MedianGraph(3, [(0, 1), (1, 2), (0, 2)])
    assert info.value.triple == (0, 1, 2)


def test_unit_graph_errors():
    with pytest.raises(DomainError):
        mg.UnitGraph(3, [(0, 1)])
    with pytest.raises(DomainError):
        mg.UnitGraph(2, [(0, 0)])
    with pytest.raises(DomainError):
        mg.UnitGraph(2, [(0, 2)])


def test_embedding_examples():
    e = mg.hypercube_embed(mg.star(3))
    assert e.dim == 3
    assert all(e.hamming(0, leaf) == 1 for leaf in (1, 2, 3))
    edge = mg.hypercube_embed(mg.path(2))
    assert edge.dim == 1 and edge.bitstring(0) == "0" and edge.bitstring(1) == "1"
    p3 = mg.hypercube_embed(mg.path(3))
    assert p3.dim == 2 and p3.hamming(0, 2) == 2


def test_embedding_dimension_counts():
    assert mg.grid(3, 3).embedding.dim == 4
    assert mg.hypercube(4).embedding.dim == 4
    assert mg.random_tree(15, 3).embedding.dim == 14


def test_embedding_rejects_non_median():
    with pytest.raises(mg.NotMedianGraphError):
        mg.hypercube_embed(mg.UnitGraph(3, [(0, 1), (1, 2), (0, 2)]))


def test_embedding_json_roundtrip():
    g = mg.grid(2, 3)
    data = g.embedding.to_json()
    assert data["dim"] == 3
    assert set(data["coords"]) == {str(v) for v in range(6)}
    back = mg.load_embedding_json(json.dumps(data))
    assert np.array_equal(back.coords, g.embedding.coords)


def test_commutation_examples():
    s = mg.star(3)
    e = s.embedding
    assert all(mg.embedding_median_commutes(s, e, *t) for t in itertools.product(range(4), repeat=3))
    assert mg.embedding_median_commutes(s, e, 2, 2, 2)


def test_closure_examples():
    g = mg.grid(3, 3)
    assert mg.median_closure(g, AgentProfile.from_pairs([(4, 5)])).members == (4,)
    assert mg.median_closure(g, AgentProfile.one_per_point([0, 8])).members == (0, 8)


def test_grid_closure_example():
    g, prof = mg.grid_closure_example()
    closure = mg.median_closure(g, prof)
    # every vertex but the corner (2, 2)
    assert closure.members == tuple(range(8))


def test_closure_witnesses_replay():
    g, prof = mg.grid_closure_example()
    closure = mg.median_closure(g, prof)
    bliss = set(prof.points.tolist())
    for v in closure.members:
        seed, steps = closure.derivation(v)
        assert seed in bliss
        m = seed
        for x, y in steps:
            assert x in bliss and y in bliss
            m = mg.triple_median(g, x, y, m)
        assert m == v


def test_generators():
    assert mg.star(3).n == 4 and mg.verify_median_graph(mg.star(3))
    q = mg.hypercube(3)
    assert q.n == 8 and q.dist.max() == 3
    assert mg.verify_median_graph(mg.random_tree(10, seed=7))
    assert mg.verify_median_graph(mg.random_grid_subset(5, 4, seed=1))
    with pytest.raises(DomainError):
        mg.star(0)
    with pytest.raises(DomainError):
        mg.grid(0, 3)


def test_random_tree_is_tree_and_reproducible():
    a, b = mg.random_tree(30, 5), mg.random_tree(30, 5)
    assert a.edges == b.edges and len(a.edges) == 29
    assert nx.is_tree(a.to_networkx())


def test_enumeration_small_counts():
    graphs = mg.enumerate_median_graphs(9)
    for n in range(1, 10):
        level = [g for g in graphs if g.n == n]
        trees = [g for g in level if len(g.edges) == n - 1]
        assert len(trees) == TREE_COUNTS[n - 1]
    # n = 4: path, claw and square
    assert len([g for g in graphs if g.n == 4]) == 3
    assert all(mg.verify_median_graph(mg.UnitGraph(g.n, g.edges)) for g in graphs)


def test_enumeration_has_no_isomorphic_duplicates():
    graphs = [g for g in mg.enumerate_median_graphs(8) if g.n == 8]
    nxs = [g.to_networkx() for g in graphs]
    for i, j in itertools.combinations(range(len(nxs)), 2):
        if sorted(d for _, d in nxs[i].degree) == sorted(d for _, d in nxs[j].degree):
            assert not nx.is_isomorphic(nxs[i], nxs[j])


def test_enumeration_distances_match_search():
    for g in mg.enumerate_median_graphs(8):
        assert np.array_equal(g.dist, floyd_warshall(g.n, g.edges))


def test_enumeration_covers_known_graphs():
    graphs = mg.enumerate_median_graphs(9)
    targets = [mg.grid(3, 3), mg.hypercube(3), mg.grid(2, 4), mg.star(8)]
    for t in targets:
        h = t.to_networkx()
        assert any(g.n == t.n and nx.is_isomorphic(g.to_networkx(), h) for g in graphs)


def test_median_table_by_distance_flags_non_median():
    t = mg.median_table_by_distance(mg.UnitGraph(3, [(0, 1), (1, 2), (0, 2)]))
    assert t[0, 1, 2] == -1 and t[0, 0, 2] == 0


@st.composite
def median_graphs(draw):
    kind = draw(st.sampled_from(["tree", "grid", "cube", "subset"]))
    seed = draw(st.integers(0, 10_000))
    if kind == "tree":
        return mg.random_tree(draw(st.integers(1, 25)), seed)
    if kind == "grid":
        return mg.grid(draw(st.integers(1, 5)), draw(st.integers(1, 5)))
    if kind == "cube":
        return mg.hypercube(draw(st.integers(0, 4)))
    return mg.random_grid_subset(draw(st.integers(1, 6)), draw(st.integers(1, 6)), seed)


@given(median_graphs())
def test_generators_pass_verification(g):
    assert mg.verify_median_graph(mg.UnitGraph(g.n, g.edges))


@given(median_graphs())
def test_embedding_is_isometric(g):
    e = g.embedding
    assert np.array_equal(e.hamming_matrix(), g.dist)
    assert len({e.bitstring(v) for v in range(g.n)}) == g.n
    assert not e.coords[0].any()


@given(median_graphs())
def test_commutation_all_triples(g):
    assert mg.all_triples_commute(g)


@given(median_graphs(), st.data())
def test_triple_median_symmetric_and_correct(g, data):
    u, v, w = (data.draw(st.integers(0, g.n - 1)) for _ in range(3))
    m = mg.triple_median(g, u, v, w)
    assert brute_medians(g.dist, u, v, w) == [m]
    for perm in itertools.permutations((u, v, w)):
        assert mg.triple_median(g, *perm) == m
        assert int(g.medians(*perm)) == m


@given(median_graphs(), st.data())
def test_closure_is_closed_and_idempotent(g, data):
    k = data.draw(st.integers(1, 5))
    pts = [data.draw(st.integers(0, g.n - 1)) for _ in range(k)]
    prof = AgentProfile.one_per_point(pts)
    c = mg.median_closure(g, prof)
    assert set(pts) <= set(c.members)
    for x, y in itertools.product(set(pts), repeat=2):
        for v in c.members:
            assert mg.triple_median(g, x, y, v) in c
    # closing the closure again adds nothing
    again = mg.median_closure(g, AgentProfile.one_per_point(c.members))
    bliss_only = {mg.triple_median(g, x, y, v) for x, y in itertools.product(set(pts), repeat=2) for v in c.members}
    assert bliss_only <= set(c.members)
    assert set(c.members) <= set(again.members)
