"""
Unit tests for the leaf split and the episode sampler
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from episodes.sampler import check_disjoint, episode_seeds, episode_stream, sample_episode
from episodes.split import SplitPlan, build_split
from features.dataset import PatchPool
from taxonomy.class_tree import family_map, load_tree
from utils.errors import ConfigError, DataError, EpisodeError


@pytest.fixture
def pool():
    """Six classes with 20 rows each; row i holds the value i"""
    labels = [f"class{c}" for c in range(6) for _ in range(20)]
    return PatchPool.from_arrays(np.arange(120.0)[:, None], labels)


class TestSampleEpisode:
    """K-way N-shot episodes"""

    def test_exact_sizes(self, pool):
        episode = sample_episode(pool, way=4, shots=3, queries=5, seed=0)
        assert episode.way == 4
        assert episode.support_idx.shape == (4, 3)
        assert episode.query_idx.shape == (4, 5)
        assert len(set(episode.classes)) == 4
        assert len(episode.support_labels()) == 12
        assert len(episode.query_labels()) == 20

    def test_rows_belong_to_their_class(self, pool):
        episode = sample_episode(pool, way=3, shots=2, queries=4, seed=5)
        for k, label in enumerate(episode.classes):
            assert set(pool.labels[episode.support_idx[k]]) == {label}
            assert set(pool.labels[episode.query_idx[k]]) == {label}
        assert episode.support_labels()[:2] == [episode.classes[0]] * 2

    def test_support_and_query_are_disjoint(self, pool):
        for seed in range(50):
            episode = sample_episode(pool, way=6, shots=8, queries=12, seed=seed)
            assert check_disjoint(episode)
            assert np.unique(np.concatenate([episode.support_rows(), episode.query_rows()])).size == 6 * 20

    def test_same_seed_same_episode(self, pool):
        a = sample_episode(pool, way=3, shots=2, queries=2, seed=11)
        b = sample_episode(pool, way=3, shots=2, queries=2, seed=11)
        assert a.classes == b.classes
        np.testing.assert_array_equal(a.support_idx, b.support_idx)
        np.testing.assert_array_equal(a.query_idx, b.query_idx)

    def test_different_seeds_differ(self, pool):
        episodes = [sample_episode(pool, way=3, shots=2, queries=2, seed=s) for s in range(10)]
        assert len({(e.classes, e.support_idx.tobytes()) for e in episodes}) > 1

    def test_too_few_patches_names_the_class(self, pool):
        small = pool.subset([f"class{c}" for c in range(6)])
        labels = small.labels.copy()
        labels[:15] = "class9"
        crowded = PatchPool.from_arrays(small.features, labels)
        with pytest.raises(EpisodeError) as info:
            sample_episode(crowded, way=2, shots=4, queries=4, seed=0)
        assert info.value.label == "class0"

    def test_too_few_classes_raises(self, pool):
        with pytest.raises(EpisodeError):
            sample_episode(pool, way=7, shots=1, queries=1)

    @pytest.mark.parametrize("counts", [(0, 1, 1), (2, 0, 1), (2, 1, 0)])
    def test_non_positive_counts_raise(self, pool, counts):
        way, shots, queries = counts
        with pytest.raises(ConfigError):
            sample_episode(pool, way=way, shots=shots, queries=queries)

    def test_forbidden_classes_fail_the_disjointness_check(self, pool):
        episode = sample_episode(pool, way=6, shots=1, queries=1, seed=0)
        assert not check_disjoint(episode, forbidden=["class3"])


class TestEpisodeStream:
    """Seeded sequences of episodes"""

    def test_stream_uses_consecutive_seeds(self, pool):
        episodes = list(episode_stream(pool, count=4, base_seed=100, way=2, shots=1, queries=1))
        assert [e.seed for e in episodes] == episode_seeds(4, 100) == [100, 101, 102, 103]
        np.testing.assert_array_equal(
            episodes[2].query_idx, sample_episode(pool, way=2, shots=1, queries=1, seed=102).query_idx
        )

    def test_negative_count_raises(self, pool):
        with pytest.raises(ConfigError):
            list(episode_stream(pool, count=-1, base_seed=0))

    def test_class_frequencies_stay_within_three_sigma(self):
        labels = [f"class{c}" for c in range(20) for _ in range(4)]
        wide = PatchPool.from_arrays(np.zeros((80, 1)), labels)
        way, count = 5, 1000

        frequency = dict.fromkeys(wide.classes, 0)
        for episode in episode_stream(wide, count=count, base_seed=0, way=way, shots=1, queries=1):
            for label in episode.classes:
                frequency[label] += 1

        p = way / 20
        expected, sigma = count * p, np.sqrt(count * p * (1 - p))
        assert sum(frequency.values()) == count * way
        assert all(abs(n - expected) <= 3 * sigma for n in frequency.values()), frequency


class TestBuildSplit:
    """Family-balanced leaf splits"""

    @pytest.fixture
    def families(self):
        return family_map(load_tree("synthetic"), level=1)

    def test_synthetic_tree_splits_fourteen_six(self, families):
        plan = build_split(families, train_fraction=0.7, seed=0)
        assert len(plan.train) == 14
        assert len(plan.eval) == 6
        assert not set(plan.train) & set(plan.eval)
        assert set(plan.train) | set(plan.eval) == set(families)

    def test_every_family_is_on_both_sides(self, families):
        for seed in range(10):
            counts = build_split(families, seed=seed).family_counts()
            assert len(counts) == 5
            assert all(a >= 1 and b >= 1 for a, b in counts.values())
            assert sorted(a for a, _ in counts.values()) == [2, 3, 3, 3, 3]

    def test_seed_is_deterministic(self, families):
        assert build_split(families, seed=3) == build_split(families, seed=3)

    def test_single_leaf_family_raises(self):
        with pytest.raises(DataError):
            build_split({"a": "f1", "b": "f1", "c": "f2"})

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
    def test_invalid_fraction_raises(self, fraction):
        with pytest.raises(ConfigError):
            build_split({"a": "f", "b": "f"}, train_fraction=fraction)

    def test_overlapping_plan_is_rejected(self):
        with pytest.raises(DataError):
            SplitPlan(train=("a",), eval=("a",), families={"a": "f"})

    def test_save_and_load(self, families, tmp_path):
        plan = build_split(families, seed=1)
        loaded = SplitPlan.load(plan.save(tmp_path / "split.json"))
        assert loaded == plan
        assert loaded.families == plan.families

    def test_missing_plan_raises(self, tmp_path):
        with pytest.raises(DataError):
            SplitPlan.load(tmp_path / "absent.json")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
