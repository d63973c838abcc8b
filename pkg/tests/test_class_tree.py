"""
Unit tests for the class tree
"""

import itertools
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from taxonomy.class_tree import (
    ClassTree,
    ancestors,
    family_map,
    lca_height,
    level_groups,
    load_tree,
    parse_tree,
    random_swap_tree,
    serialize_tree,
    shorten_to_height,
)
from utils.errors import TreeError


def random_document(rng: np.random.Generator, max_depth: int = 4) -> dict:
    """Random hierarchy with uneven leaf depths and unique names"""
    counter = itertools.count()

    def build(depth: int):
        if depth == max_depth or (depth > 0 and rng.random() < 0.3):
            return [f"leaf{next(counter)}" for _ in range(int(rng.integers(1, 4)))]
        return {f"node{next(counter)}": build(depth + 1) for _ in range(int(rng.integers(1, 4)))}

    return {"root": build(0)}


def oracle_lca_height(tree: ClassTree, a: int, b: int) -> int:
    """Explicit ancestor-set intersection"""

    def ancestor_set(node_id):
        found = set()
        while node_id is not None:
            found.add(node_id)
            node_id = tree.node(node_id).parent
        return found

    common = ancestor_set(a) & ancestor_set(b)
    return min(tree.level(n) for n in common)


class TestParseTree:
    """Parsing and validation"""

    @pytest.fixture
    def small_tree(self):
        return parse_tree({"root": {"strings": ["violin", "cello"], "percussion": ["snare"]}})

    def test_one_family_level_parses_to_height_one(self, small_tree):
        assert small_tree.height == 1
        assert not small_tree.flat
        assert set(small_tree.leaf_names) == {"violin", "cello", "snare"}
        assert len(small_tree.nodes_at_level(1)) == 2
        assert small_tree.level(small_tree.root) == 2

    def test_leaf_ancestors_stop_below_the_root(self, small_tree):
        chain = ancestors(small_tree, "violin")
        assert len(chain) == small_tree.height + 1
        assert chain[0] == small_tree.leaf_id("violin")
        assert small_tree.name(chain[-1]) == "strings"
        assert small_tree.root not in chain
        assert small_tree.chain("violin")[-1] == small_tree.root

    def test_ids_follow_document_order(self, small_tree):
        assert [n.name for n in small_tree.nodes] == ["root", "strings", "violin", "cello", "percussion", "snare"]

    def test_uneven_depths_are_padded(self):
        tree = parse_tree({"root": {"a": {"b": ["deep"]}, "shallow_family": ["shallow"]}})
        assert tree.height == 2
        chain = tree.chain("shallow")
        assert len(chain) == 4
        assert tree.name(chain[1]) == "shallow@h1"
        assert all(tree.level(node) == h for h, node in enumerate(chain))

    def test_leaves_directly_under_the_root_are_flat(self):
        tree = parse_tree('{"root": ["a", "b"]}')
        assert tree.height == 0
        assert tree.flat
        assert tree.leaf_names == ("a", "b")

    @pytest.mark.parametrize("document", [
        {},
        {"root": []},
        {"root": {}},
        {"r1": ["a"], "r2": ["b"]},
        {"root": {"x": ["a"], "y": ["a"]}},
        {"root": {"a": {"a": ["x"]}}},
        {"root": {"x": [1, 2]}},
        {"root": {"x": "not a list"}},
    ])
    def test_malformed_documents_raise(self, document):
        with pytest.raises(TreeError):
            parse_tree(document)

    def test_invalid_json_raises(self):
        with pytest.raises(TreeError):
            parse_tree("{not json")

    def test_serialize_roundtrip_for_bundled_trees(self):
        for name in ("hornbostel_sachs", "synthetic"):
            tree = load_tree(name)
            assert parse_tree(serialize_tree(tree)) == tree
        flat = shorten_to_height(load_tree("synthetic"), 0)
        assert parse_tree(serialize_tree(flat)) == flat

    def test_unknown_tree_source_raises(self):
        with pytest.raises(TreeError):
            load_tree("no_such_tree")

    def test_save_and_load_file(self, tmp_path):
        tree = load_tree("synthetic")
        path = tree.save(tmp_path / "tree.json")
        assert load_tree(path) == tree


class TestBundledTrees:
    """Shape of the bundled hierarchies"""

    def test_hornbostel_sachs_has_four_family_levels(self):
        tree = load_tree("hornbostel_sachs")
        assert tree.height == 4
        assert [len(tree.nodes_at_level(h)) for h in range(6)] == [67, 15, 9, 5, 4, 1]
        assert {tree.name(n) for n in tree.nodes_at_level(4)} == {
            "chordophones", "aerophones", "idiophones", "membranophones",
        }

    def test_synthetic_tree_has_twenty_leaves_in_five_families(self):
        tree = load_tree("synthetic")
        assert len(tree.leaves) == 20
        families = family_map(tree, level=1)
        assert len(set(families.values())) == 5
        assert families["synth_cello"] == "bowed_strings"
        assert tree.height == 2
        assert family_map(tree, level=2)["synth_snare"] == "decaying"
        assert set(family_map(tree, level=3).values()) == {"root"}

    def test_synthetic_leaves_appear_in_hornbostel_sachs(self):
        reference = load_tree("hornbostel_sachs")
        for name in load_tree("synthetic").leaf_names:
            reference.leaf_id(name)


class TestLcaHeight:
    """Lowest common ancestor heights"""

    @pytest.fixture
    def tree(self):
        return load_tree("hornbostel_sachs")

    def test_same_leaf_is_zero(self, tree):
        assert lca_height(tree, "violin", "violin") == 0

    def test_siblings_are_one(self, tree):
        assert lca_height(tree, "violin", "cello") == 1

    def test_different_top_classes_meet_at_root(self, tree):
        assert lca_height(tree, "violin", "snare_drum") == tree.height + 1 == 5

    def test_flat_tree_mistakes_score_one(self, tree):
        flat = shorten_to_height(tree, 0)
        assert lca_height(flat, "violin", "snare_drum") == 1

    def test_ids_and_names_are_interchangeable(self, tree):
        assert lca_height(tree, tree.leaf_id("flute"), "oboe") == lca_height(tree, "flute", "oboe") == 3

    def test_internal_node_is_rejected(self, tree):
        with pytest.raises(TreeError):
            lca_height(tree, tree.root, "violin")

    def test_agrees_with_ancestor_intersection_oracle(self):
        rng = np.random.default_rng(7)
        cases = 0
        for _ in range(20):
            tree = parse_tree(random_document(rng))
            leaves = np.array(tree.leaves)
            for _ in range(50):
                a, b = (int(x) for x in rng.choice(leaves, size=2))
                assert lca_height(tree, a, b) == oracle_lca_height(tree, a, b)
                cases += 1
        assert cases == 1000

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=100_000))
    def test_symmetric_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        tree = parse_tree(random_document(rng))
        a, b = (int(x) for x in rng.choice(np.array(tree.leaves), size=2))
        h = lca_height(tree, a, b)
        assert h == lca_height(tree, b, a)
        assert 0 <= h <= tree.height + 1
        assert (h == 0) == (a == b)


class TestShortenToHeight:
    """Removing levels above the leaves"""

    @pytest.fixture
    def tree(self):
        return load_tree("hornbostel_sachs")

    def test_full_height_is_identity(self, tree):
        assert shorten_to_height(tree, tree.height) == tree

    def test_height_zero_is_flat(self, tree):
        flat = shorten_to_height(tree, 0)
        assert flat.flat
        assert flat.height == 0
        assert flat.level(flat.root) == 1
        assert set(flat.leaf_names) == set(tree.leaf_names)
        assert lca_height(flat, "violin", "cello") == 1

    def test_height_one_keeps_only_the_top_families(self, tree):
        short = shorten_to_height(tree, 1)
        assert short.height == 1
        assert short.name(short.chain("violin")[1]) == "chordophones"
        assert len(short.nodes_at_level(1)) == 4
        assert lca_height(short, "violin", "harp") == 1
        assert lca_height(short, "violin", "snare_drum") == 2
        assert set(short.leaf_names) == set(tree.leaf_names)

    def test_height_one_differs_from_flat(self, tree):
        assert shorten_to_height(tree, 1) != shorten_to_height(tree, 0)
        assert shorten_to_height(tree, 1).describe() != shorten_to_height(tree, 0).describe()

    def test_keeps_the_broadest_levels(self, tree):
        short = shorten_to_height(tree, 2)
        assert short.height == 2
        chain = short.chain("violin")
        assert [short.name(n) for n in chain[1:3]] == ["composite_chordophones", "chordophones"]

    def test_composition_law(self, tree):
        for b in range(tree.height + 1):
            shortened_b = shorten_to_height(tree, b)
            for a in range(b + 1):
                assert shorten_to_height(shortened_b, a) == shorten_to_height(tree, a)

    def test_padding_names_follow_the_new_levels(self):
        tree = parse_tree({"root": {"a": {"b": {"c": ["deep"]}}, "s": ["shallow", "other"]}})
        short = shorten_to_height(tree, 2)
        chain = short.chain("shallow")
        assert [short.name(n) for n in chain] == ["shallow", "shallow@h1", "s", "root"]
        swapped = short.with_leaf_names({short.leaf_id("shallow"): "deep", short.leaf_id("deep"): "shallow"})
        assert swapped.name(chain[1]) == "deep@h1"

    @pytest.mark.parametrize("height", [-1, 5])
    def test_out_of_range_raises(self, tree, height):
        with pytest.raises(TreeError):
            shorten_to_height(tree, height)


class TestLevelGroups:
    """Grouping present nodes under their parents"""

    def test_groups_only_present_leaves(self):
        tree = parse_tree({"root": {"strings": ["violin", "cello"], "percussion": ["snare", "tom"]}})
        groups = level_groups(tree, 1, ["violin", "snare", "tom"])
        strings, percussion = tree.chain("violin")[1], tree.chain("snare")[1]
        assert list(groups) == sorted([strings, percussion])
        assert groups[strings] == frozenset({tree.leaf_id("violin")})
        assert groups[percussion] == frozenset({tree.leaf_id("snare"), tree.leaf_id("tom")})

    def test_top_level_collects_subfamilies(self):
        tree = parse_tree({"root": {
            "strings": {"bowed": ["violin"], "plucked": ["guitar"]},
            "percussion": {"drums": ["snare"]},
        }})
        groups = level_groups(tree, 2, ["violin", "guitar", "snare"])
        strings, percussion = tree.chain("violin")[2], tree.chain("snare")[2]
        assert list(groups) == [strings, percussion]
        assert groups[strings] == frozenset({tree.chain("violin")[1], tree.chain("guitar")[1]})
        assert tree.root not in groups

    @pytest.mark.parametrize("h", [0, 2])
    def test_level_out_of_range_raises(self, h):
        tree = parse_tree({"root": {"strings": ["violin"], "percussion": ["snare"]}})
        with pytest.raises(TreeError):
            level_groups(tree, h, ["violin"])


class TestRandomSwapTree:
    """Random leaf permutations"""

    @pytest.fixture
    def tree(self):
        return load_tree("synthetic")

    def test_structure_is_preserved(self, tree):
        swapped = random_swap_tree(tree, seed=3)
        assert swapped.height == tree.height
        assert [n.level for n in swapped.nodes] == [n.level for n in tree.nodes]
        assert [n.parent for n in swapped.nodes] == [n.parent for n in tree.nodes]
        assert sorted(swapped.leaf_names) == sorted(tree.leaf_names)

    def test_seed_is_deterministic(self, tree):
        assert random_swap_tree(tree, seed=11) == random_swap_tree(tree, seed=11)
        assert random_swap_tree(tree, seed=11) != random_swap_tree(tree, seed=12)

    def test_zero_swaps_is_identity(self, tree):
        assert random_swap_tree(tree, seed=0, swaps_per_leaf=0) == tree

    def test_padding_nodes_follow_their_leaf(self):
        tree = parse_tree({"root": {"a": {"b": ["deep1", "deep2"]}, "shallow_family": ["shallow"]}})
        renamed = tree.with_leaf_names({tree.leaf_id("shallow"): "deep1", tree.leaf_id("deep1"): "shallow"})
        slot = tree.leaf_id("shallow")
        assert renamed.name(slot) == "deep1"
        assert renamed.name(renamed.chain(slot)[1]) == "deep1@h1"
        assert "shallow@h1" not in {node.name for node in renamed.nodes}

    def test_swapped_padding_names_match_the_leaf_below(self):
        tree = parse_tree({"root": {
            "a": {"b": ["deep1", "deep2"], "c": ["deep3"]},
            "shallow_family": ["shallow1", "shallow2"],
        }})
        swapped = random_swap_tree(tree, seed=5)
        padded = 0
        for leaf in swapped.leaves:
            for node in swapped.chain(leaf)[1:]:
                if "@h" in swapped.name(node):
                    assert swapped.name(node) == f"{swapped.name(leaf)}@h{swapped.level(node)}"
                    padded += 1
        assert padded == 2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
