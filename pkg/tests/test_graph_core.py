"""Canonical labeling, automorphism groups and orbit machinery, checked
against brute-force permutation scans."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sagfn.graph_core import (LabeledGraph, Permutation, apply_permutation,
                              are_isomorphic, automorphism_group,
                              automorphism_order, canonical_form,
                              canonical_relabeling, canonicalize,
                              graph_from_json_dict, graph_to_json_dict,
                              stabilizer_order, subgraph_orbit_size)

from helpers import (brute_force_automorphisms, brute_force_isomorphic,
                     brute_force_node_orbits, graph_fingerprint,
                     permute_graph, random_graph)


@st.composite
def small_graphs(draw, max_n=6, n_labels=2, n_edge_labels=2):
    n = draw(st.integers(0, max_n))
    labels = tuple(draw(st.integers(0, n_labels - 1)) for _ in range(n))
    edges = {}
    for u in range(n):
        for v in range(u + 1, n):
            if draw(st.booleans()):
                edges[(u, v)] = draw(st.integers(0, n_edge_labels - 1))
    return LabeledGraph(n, labels, edges)


@st.composite
def permutations_of(draw, n):
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = draw(st.integers(0, i))
        perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm)


# -- canonical forms -----------------------------------------------------

@settings(max_examples=150, deadline=None)
@given(st.data())
def test_canonical_form_is_permutation_invariant(data):
    g = data.draw(small_graphs())
    perm = data.draw(permutations_of(g.n))
    assert canonical_form(g) == canonical_form(permute_graph(g, perm))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_distinct_classes_get_distinct_forms(data):
    g1 = data.draw(small_graphs(max_n=5))
    g2 = data.draw(small_graphs(max_n=5))
    same = canonical_form(g1) == canonical_form(g2)
    assert same == brute_force_isomorphic(g1, g2)


def test_canonicalize_returns_isomorphic_representative(rng):
    for _ in range(30):
        g = random_graph(rng, int(rng.integers(0, 7)), n_labels=2)
        key, rep = canonicalize(g)
        assert brute_force_isomorphic(g, rep)
        assert canonical_form(rep) == key
        # the representative is a fixed point of canonicalization
        assert canonicalize(rep)[1] == rep


def test_canonical_relabeling_maps_to_representative(rng):
    for _ in range(30):
        g = random_graph(rng, int(rng.integers(1, 7)), n_labels=2)
        p = canonical_relabeling(g)
        _, rep = canonicalize(g)
        assert apply_permutation(g, p) == rep


def test_graph_attributes_distinguish_forms():
    g = LabeledGraph(2, (0, 0), {(0, 1): 0})
    assert canonical_form(g) != canonical_form(g.with_attrs(terminated=True))


# -- isomorphism ---------------------------------------------------------

def test_are_isomorphic_with_witness(rng):
    for _ in range(25):
        g = random_graph(rng, int(rng.integers(1, 7)), n_labels=2)
        perm = tuple(map(int, rng.permutation(g.n)))
        h = permute_graph(g, perm)
        ok, p = are_isomorphic(g, h, witness=True)
        assert ok
        assert graph_fingerprint(apply_permutation(g, p)) == \
            graph_fingerprint(h)


def test_are_isomorphic_rejects_non_isomorphic():
    path = LabeledGraph(4, edges={(0, 1): 0, (1, 2): 0, (2, 3): 0})
    star = LabeledGraph(4, edges={(0, 1): 0, (0, 2): 0, (0, 3): 0})
    assert are_isomorphic(path, star) is False
    ok, p = are_isomorphic(path, star, witness=True)
    assert not ok and p is None


# -- automorphisms -------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(st.data())
def test_automorphism_order_matches_brute_force(data):
    g = data.draw(small_graphs())
    assert automorphism_order(g) == len(brute_force_automorphisms(g))


def test_node_orbits_match_brute_force(rng):
    for _ in range(40):
        g = random_graph(rng, int(rng.integers(1, 7)), n_labels=2)
        got = {frozenset(o) for o in
               automorphism_group(g).node_orbit_partition}
        assert got == set(brute_force_node_orbits(g))


def test_pair_orbits_match_brute_force(rng):
    for _ in range(25):
        g = random_graph(rng, int(rng.integers(2, 7)))
        autos = brute_force_automorphisms(g)
        aut = automorphism_group(g)
        idx = aut.pair_orbit_index
        for (u, v) in [(u, v) for u in range(g.n)
                       for v in range(u + 1, g.n)]:
            orbit = {tuple(sorted((p[u], p[v]))) for p in autos}
            ids = {idx[e] for e in orbit}
            assert len(ids) == 1
            the_id = next(iter(ids))
            # exactly the orbit's pairs carry this id
            assert {e for e, i in idx.items() if i == the_id} == orbit


def test_group_elements_count_and_closure():
    cycle5 = LabeledGraph(5, edges={(i, (i + 1) % 5): 0 for i in range(5)})
    grp = automorphism_group(cycle5)
    assert grp.order == 10  # dihedral
    elems = {p.mapping for p in grp.elements}
    assert len(elems) == 10
    for p in grp.elements:
        for q in grp.elements:
            assert p.compose(q).mapping in elems


def test_known_orders():
    k5 = LabeledGraph(5, edges={(u, v): 0 for u in range(5)
                                for v in range(u + 1, 5)})
    assert automorphism_order(k5) == 120
    empty = LabeledGraph(0)
    assert automorphism_order(empty) == 1
    petersen_edges = {(0, 1), (1, 2), (2, 3), (3, 4), (0, 4),
                      (5, 7), (7, 9), (9, 6), (6, 8), (8, 5),
                      (0, 5), (1, 6), (2, 7), (3, 8), (4, 9)}
    petersen = LabeledGraph(10, edges={e: 0 for e in petersen_edges})
    assert automorphism_order(petersen) == 120


# -- stabilizers and orbit sizes -----------------------------------------

def test_orbit_stabilizer_identity(rng):
    for _ in range(30):
        g = random_graph(rng, int(rng.integers(1, 7)), n_labels=2)
        autos = brute_force_automorphisms(g)
        aut = automorphism_group(g)
        for v in range(g.n):
            orbit = {p[v] for p in autos}
            assert len(orbit) * stabilizer_order(g, v) == aut.order


def test_subgraph_orbit_size_matches_brute_force(rng):
    for _ in range(20):
        g = random_graph(rng, int(rng.integers(2, 7)))
        autos = brute_force_automorphisms(g)
        k = int(rng.integers(1, g.n + 1))
        vs = frozenset(map(int, rng.choice(g.n, size=k, replace=False)))
        expect = len({frozenset(p[v] for v in vs) for p in autos})
        assert subgraph_orbit_size(g, vs) == expect
        assert expect * stabilizer_order(g, vs) == len(autos)


# -- permutations --------------------------------------------------------

def test_permutation_algebra():
    p = Permutation((2, 0, 1))
    q = Permutation((1, 0, 2))
    assert p.compose(p.inverse()).mapping == (0, 1, 2)
    r = p.compose(q)  # apply q, then p
    for i in range(3):
        assert r[i] == p[q[i]]
    assert Permutation.identity(4).mapping == (0, 1, 2, 3)


def test_apply_permutation_roundtrip(rng):
    g = random_graph(rng, 6, n_labels=2)
    p = Permutation(tuple(map(int, rng.permutation(6))))
    assert apply_permutation(apply_permutation(g, p), p.inverse()) == g


# -- serialization -------------------------------------------------------

def test_json_roundtrip(rng):
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(0, 7)), n_labels=3,
                         n_edge_labels=2).with_attrs(terminated=True)
        assert graph_from_json_dict(graph_to_json_dict(g)) == g


def test_invalid_graphs_rejected():
    with pytest.raises(ValueError):
        LabeledGraph(2, (0,))  # label count mismatch
    g = LabeledGraph(2)
    with pytest.raises(ValueError):
        g.with_edge(0, 0)
    with pytest.raises(ValueError):
        g.with_edge(0, 5)
