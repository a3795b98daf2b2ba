import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st_

from cegmon.tree import (SINK, EventTree, ModelError, StagedTree, Staging, VariableSpec, build_event_tree,
                         compute_positions, edge_event_paths, saturated_staging, to_ceg)
from oracles import all_leaf_rows, brute_positions, path_probability, random_staged_tree, situation_of_prefix


def tree_of(*cards):
    return EventTree([VariableSpec(f"X{i}", tuple(f"v{j}" for j in range(k))) for i, k in enumerate(cards)])


@pytest.mark.parametrize("cards,n_sit,n_leaf", [((2,), 1, 2), ((2, 2, 3, 2), 19, 24), ((3, 3), 4, 9)])
def test_situation_and_leaf_counts(cards, n_sit, n_leaf):
    t = tree_of(*cards)
    assert t.n_situations == n_sit
    assert t.n_leaves == n_leaf
    assert len(t.leaves) == n_leaf


@given(st_.lists(st_.integers(2, 4), min_size=1, max_size=5))
def test_counts_match_products(cards):
    t = tree_of(*cards)
    assert t.n_situations == 1 + sum(math.prod(cards[:d]) for d in range(1, len(cards)))
    assert t.n_leaves == math.prod(cards)
    assert len(t.edges) == sum(math.prod(cards[:d + 1]) for d in range(len(cards)))
    for s in range(t.n_situations):
        kids = t.children(s)
        assert len(kids) == cards[t.cut_of(s)]


def test_situations_in_tree_order():
    t = tree_of(2, 3, 2)
    assert t.situations[:4] == [(), ("v0",), ("v1",), ("v0", "v0")]
    for s in range(t.n_situations):
        assert t.situation_index(t.label_path(s)) == s
        assert t.situation_of_id(t.situation_id(s)) == s
        assert situation_of_prefix(t, t.index_path(s)) == s


def test_bad_variables_rejected():
    with pytest.raises(ModelError):
        VariableSpec("A", ("x",))
    with pytest.raises(ModelError):
        VariableSpec("A", ("x", "x"))
    with pytest.raises(ModelError):
        build_event_tree([VariableSpec("A", ("x", "y")), VariableSpec("A", ("p", "q"))])


def test_edge_event_paths():
    assert len(edge_event_paths(tree_of(2, 2), ((), "v0"))) == 2
    assert len(edge_event_paths(tree_of(2, 2), (("v1",), "v0"))) == 1
    t = tree_of(2, 3, 2)
    paths = edge_event_paths(t, (("v1",), "v2"))
    assert paths == {("v1", "v2", "v0"), ("v1", "v2", "v1")}
    with pytest.raises(ModelError):
        edge_event_paths(t, (("v1",), "nope"))


def test_cross_cut_stage_rejected():
    t = tree_of(2, 2)
    with pytest.raises(ModelError, match="another cut"):
        StagedTree(t, Staging((((0, 1),), ((1,), (2,)))))
    with pytest.raises(ModelError, match="cover"):
        StagedTree(t, Staging((((0,),), ((1,),))))
    with pytest.raises(ModelError, match="overlap"):
        StagedTree(t, Staging((((0,),), ((1, 2), (2,)))))


def test_probabilities_must_sum_to_one():
    t = tree_of(2)
    with pytest.raises(ModelError):
        StagedTree(t, saturated_staging(t), probabilities=(np.array([0.5, 0.6]),))


def test_saturated_positions_are_situations():
    t = tree_of(2, 3, 2)
    st = StagedTree(t, saturated_staging(t))
    assert list(compute_positions(st)) == list(range(t.n_situations))


def test_shared_stage_gives_one_position():
    t = tree_of(2, 2)
    st = StagedTree(t, Staging((((0,),), ((1, 2),))))
    ceg = to_ceg(st)
    assert ceg.n_positions == 2
    assert ceg.edges == ((0, 0, 1), (0, 1, 1), (1, 0, SINK), (1, 1, SINK))


def test_chds_ahc_position_structure(chds_ahc):
    ceg = to_ceg(chds_ahc)
    per_cut = [ceg.position_cut.count(d) for d in range(4)]
    assert per_cut == [1, 2, 3, 3]


@settings(max_examples=60, deadline=None)
@given(st_.integers(0, 2**32 - 1))
def test_positions_match_pairwise_oracle(seed):
    rng = np.random.default_rng(seed)
    st = random_staged_tree(rng, max_vars=4, max_card=3, priors=False, probabilities=False)
    pos = compute_positions(st)
    mine = {frozenset(np.flatnonzero(pos == w).tolist()) for w in set(pos.tolist())}
    assert mine == brute_positions(st)
    # positions refine stages
    for w in set(pos.tolist()):
        assert len(set(st.stage_of[pos == w].tolist())) == 1


def test_path_probability_preserved_on_random_trees():
    rng = np.random.default_rng(7)
    for _ in range(100):
        st = random_staged_tree(rng, priors=False)
        ceg = to_ceg(st)
        total = 0.0
        for row in all_leaf_rows(st.tree):
            w, p = 0, 1.0
            for j in row:
                p *= ceg.edge_label(w, j)
                w = ceg.child_table()[w, j]
            assert w == SINK
            assert abs(p - path_probability(st, row)) < 1e-12
            total += p
        assert abs(total - 1.0) < 1e-12


def test_staging_is_immutable(chds_ahc):
    with pytest.raises(Exception):
        chds_ahc.staging.blocks = ()
    with pytest.raises(ValueError):
        chds_ahc.stage_of[0] = 3
