import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from doublemetrics.algebra import compose
from doublemetrics.spaces import check_cross, subset_metric
from doublemetrics.trees import (
    PrefixMap, RootedTree, all_prefix_maps, boundary_distance, chi_tree, compose_maps,
    corollary_check, parse_word, psi_tree, rays_lemma_check, transport_distortion, word_label,
)

FIXTURES = {
    "identity0": [("0", "0", 1)],
    "swap": [("0", "1", 0.5), ("1", "0", 0.5)],
    "swap_c1": [("0", "1", 1), ("1", "0", 1)],
    "shift": [("0", "00", 1), ("1", "01", 1)],
    "perm4": [("00", "11", 0.5), ("01", "10", 0.5), ("10", "00", 0.5), ("11", "01", 0.5)],
    "mixed": [("00", "1", 1), ("01", "01", 0.5), ("1", "00", 1)],
    "partial": [("00", "11", 0.5), ("11", "00", 0.5)],
    "unshift": [("00", "0", 1)],
}


@lru_cache(None)
def binary(depth):
    return RootedTree.regular(2, depth)


def F(name):
    return PrefixMap.from_triples(FIXTURES[name])


def star_tree(k, depth):
    return RootedTree.from_rule(depth, lambda w: k if not w else 1)


# ---- trees and boundary ------------------------------------------------------

def test_tree_metric_is_path_metric():
    tree = binary(4)
    words = oracles.binary_words(4)
    assert tree.nodes == words
    want = [[oracles.tree_dist(a, b) for b in words] for a in words]
    assert tree.dist.tolist() == want


def test_dead_end_rejected():
    with pytest.raises(ValueError, match="dead end"):
        RootedTree(3, {(): 2, (0,): 1, (1,): 0})


def test_from_levels_round_trip():
    tree = RootedTree.from_rule(4, lambda w: 1 + (len(w) + sum(w)) % 2)
    again = RootedTree.from_levels(tree.depth, tree.to_dict()["children"])
    assert again.nodes == tree.nodes


def test_boundary_distance_examples():
    assert boundary_distance((0, 0, 1, 0), (0, 0, 1, 1)) == pytest.approx(math.exp(-3))
    assert round(boundary_distance((0, 0, 1, 0), (0, 0, 1, 1)), 6) == 0.049787
    assert boundary_distance((1, 0, 1), (1, 0, 1)) <= math.exp(-3)
    assert boundary_distance((0, 1), (1, 1)) == 1
    with pytest.raises(ValueError):
        boundary_distance((0,), (0, 1))


def test_word_helpers():
    assert parse_word("0110") == (0, 1, 1, 0)
    assert parse_word("1.12.0") == (1, 12, 0)
    assert word_label((1, 12, 0)) == "1.12.0"
    assert word_label(parse_word("0110")) == "0110"


# ---- PrefixMap validation -------------------------------------------------------

@pytest.mark.parametrize("triples,needle", [
    ([("0", "1", 0.5), ("00", "10", 0.5)], "domain cylinders overlap"),
    ([("0", "1", 0.5), ("1", "1", 0.5)], "image cylinders overlap"),
    ([("0", "1", 0.25)], "below"),
    ([("0", "000", 1)], "depth change"),
    ([("0000", "1111", 0.5)], "truncation depth"),
    ([("2", "0", 0.5)], "not in tree"),
])
def test_prefix_map_problems(triples, needle):
    errs = PrefixMap.from_triples(triples).problems(binary(4))
    assert any(needle in e for e in errs), errs


def test_subtree_mismatch():
    tree = RootedTree.from_rule(4, lambda w: 2 if w in ((), (0,)) else 1)
    errs = PrefixMap.from_triples([("0", "1", 1)]).problems(tree)
    assert any("subtrees" in e for e in errs)


def test_meet_depth_condition():
    # the two sources meet at depth 1, the images at depth 0, with C only 0.5
    errs = PrefixMap.from_triples([("00", "00", 0.5), ("01", "10", 0.5)]).problems(binary(5))
    assert any("meet depth" in e for e in errs)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_boundary_map_matches_oracle(name):
    tree = binary(6)
    bm = F(name).boundary_map(tree)
    triples = [(parse_word(u), parse_word(v), c) for u, v, c in FIXTURES[name]]
    want = {r: oracles.prefix_image(r, triples, 6) for r in tree.leaves}
    assert bm == {r: t for r, t in want.items() if t is not None}


def test_prefix_map_dict_round_trip():
    G = F("mixed")
    assert PrefixMap.from_dict(G.to_dict()) == G


# ---- chi_tree ----------------------------------------------------------------

def _edges_for_oracle(tree, G, gluing=1.0):
    edges = [((), (), gluing)]
    for z, (fz, C) in G.transport(tree).items():
        edges.append((z, fz, 2 * C))
    return edges


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_chi_matches_doubled_graph_shortest_paths(name):
    tree = binary(5)
    G = F(name)
    rho = chi_tree(tree, G)
    want = oracles.doubled_tree_cross(tree.nodes, _edges_for_oracle(tree, G))
    assert rho.cross.tolist() == want
    assert check_cross(rho.space, rho.cross) == []


def test_chi_identity_on_cylinder():
    tree = binary(5)
    rho = chi_tree(tree, F("identity0"))
    for z in tree.nodes:
        if z[:1] == (0,):
            i = tree.index(z)
            assert rho.cross[i, i] == 2


def test_chi_swap():
    tree = binary(5)
    rho = chi_tree(tree, F("swap_c1"))
    for z in tree.nodes:
        if z:
            w = (1 - z[0],) + z[1:]
            assert rho.cross[tree.index(z), tree.index(w)] == 2


def test_chi_empty_map_is_basepoint_gluing():
    tree = binary(4)
    G = 3.0
    rho = chi_tree(tree, PrefixMap(()), gluing=G)
    r = tree.dist[0]
    assert np.array_equal(rho.cross, r[:, None] + G + r[None, :])


def test_chi_rejects_invalid_map():
    with pytest.raises(ValueError):
        chi_tree(binary(3), PrefixMap.from_triples([("000", "111", 1)]))


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_transport_distortion_exhaustive(name):
    tree = binary(7)
    G = F(name)
    moved = G.transport(tree)
    d = tree.dist
    for row in transport_distortion(tree, G):
        zs = [z for z, (_, C) in moved.items() if C <= row["C"]]
        worst = max(abs(oracles.tree_dist(moved[a][0], moved[b][0]) - oracles.tree_dist(a, b)) for a in zs for b in zs)
        assert row["max_distortion"] == worst
        assert worst <= 2 * row["C"]
    assert d.shape[0] == len(tree)


# ---- psi_tree ----------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_round_trip(name):
    tree = binary(7)
    G = F(name)
    rec = psi_tree(chi_tree(tree, G), tree)
    assert rec.mapping == G.boundary_map(tree)


def test_recovered_strata_follow_constants():
    tree = binary(7)
    rec = psi_tree(chi_tree(tree, F("mixed")), tree)
    levels = dict((m, A) for m, A in rec.strata())
    on01 = {r for r in rec.mapping if r[:2] == (0, 1)}
    assert on01 <= levels[1]
    assert set(rec.mapping) == levels[max(levels)]
    rep = rec.to_dict()
    assert set(rep) == {"pairs", "strata", "residuals"}


def test_psi_single_ray_identity():
    tree = star_tree(3, 8)
    r0 = tree.leaves[1]
    rho = subset_metric(tree.space(), [tree.index(r0[:i]) for i in range(tree.depth + 1)])
    assert psi_tree(rho, tree).mapping == {r0: r0}


def test_psi_all_divergent_is_empty():
    tree = star_tree(3, 8)
    rho = subset_metric(tree.space(), [0])
    assert psi_tree(rho, tree).mapping == {}


def test_psi_rejects_other_space():
    with pytest.raises(ValueError):
        psi_tree(chi_tree(binary(3), F("swap")), binary(4))


def test_round_trip_every_small_map():
    tree = binary(5)
    maps = all_prefix_maps(tree, max_len=2, max_pairs=2)
    assert len(maps) > 200
    wrong = [G for G in maps if psi_tree(chi_tree(tree, G), tree).mapping != G.boundary_map(tree)]
    assert wrong == []


@pytest.mark.parametrize("depth", [5, 8])
def test_round_trip_depth_change_two(depth):
    # padding the shallower image with first children inflates the true
    # target's cost mid-ray; the deep end still singles it out
    tree = binary(depth)
    G = PrefixMap.from_triples([("10", "", 2)])
    assert psi_tree(chi_tree(tree, G), tree).mapping == G.boundary_map(tree)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 3), st.data())
def test_round_trip_property_wider_trees(k, data):
    tree = RootedTree.regular(k, 4)
    maps = _maps(k)
    G = data.draw(st.sampled_from(maps))
    assert psi_tree(chi_tree(tree, G), tree).mapping == G.boundary_map(tree)


@lru_cache(None)
def _maps(k):
    return tuple(all_prefix_maps(RootedTree.regular(k, 4), max_len=1, max_pairs=2))


@pytest.mark.parametrize("f,g", [("swap", "swap"), ("swap", "shift"), ("mixed", "swap"), ("perm4", "perm4"), ("partial", "identity0"), ("unshift", "swap")])
def test_semigroup_respect(f, g):
    tree = binary(7)
    Ff, Fg = F(f), F(g)
    rho = compose(chi_tree(tree, Ff), chi_tree(tree, Fg))
    want = compose_maps(Ff.boundary_map(tree), Fg.boundary_map(tree))
    assert psi_tree(rho, tree).mapping == want


# ---- meet depths and small boundaries ---------------------------------------

def test_meet_depths_identity_and_swap():
    r1, r2 = (0, 0, 1, 1, 0), (0, 0, 1, 0, 1)
    out = rays_lemma_check(r1, r2, r1, r2, 0.5)
    assert out["L"] == out["M"] == 3 and out["diff"] == 0 and out["strict"]
    t1, t2 = (1, 0, 1, 1, 0), (1, 0, 1, 0, 1)
    out = rays_lemma_check(r1, r2, t1, t2, 0.5)
    assert out["diff"] == 0 and out["ratio"] == 1


def test_meet_depths_shift_at_tolerance():
    tree = binary(6)
    G = PrefixMap.from_triples([("0", "00", 1)])
    r1, r2 = (0, 1, 1, 0, 0, 0), (0, 1, 0, 0, 0, 0)
    t1, t2 = G.image(tree, r1), G.image(tree, r2)
    out = rays_lemma_check(r1, r2, t1, t2, 1)
    assert (out["L"], out["M"], out["diff"]) == (2, 3, 1)
    assert not out["strict"] and out["within_tolerance"]
    assert out["ratio"] == pytest.approx(math.exp(-1))


def test_small_boundaries():
    rep = corollary_check(depth=6)
    half, two = rep["half_line"], rep["two_ray_line"]
    assert half["count"] == 2 and half["all_roundtrip"]
    assert {len(dict(m)) for m in half["maps"]} == {0, 1}
    assert two["count"] == 7 and two["all_roundtrip"]
    r0, r1 = two["tree"].leaves
    assert sorted(two["maps"]) == sorted([
        (), ((r0, r0),), ((r1, r1),), ((r0, r1),), ((r1, r0),),
        ((r0, r0), (r1, r1)), ((r0, r1), (r1, r0)),
    ])
