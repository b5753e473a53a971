import numpy as np
import pytest

from stratkit import errors
from stratkit.kmeans import kmeans_fit
from stratkit.metrics import v_measure
from stratkit.synth import SynthConfig, generate_cohort, generate_taxonomy


class TestTaxonomyShape:
    def test_node_count_2222(self):
        tree = generate_taxonomy(SynthConfig(branching=(2, 2, 2, 2)))
        assert len(tree.nodes) == 30

    def test_degenerate_chain(self):
        tree = generate_taxonomy(SynthConfig(branching=(1, 1, 1, 1)))
        assert len(tree.nodes) == 4
        assert tree.ancestor_at_level("C1.1.1.1", 1) == "C1"

    def test_default_leaves(self):
        tree = generate_taxonomy(SynthConfig())
        assert len(tree.codes_at_level(4)) == 54


class TestGenerate:
    def test_config_mismatch(self):
        tree = generate_taxonomy(SynthConfig(branching=(2, 2, 2, 2)))
        with pytest.raises(errors.ConfigMismatch):
            generate_cohort(SynthConfig(branching=(3, 3, 3, 2)), tree)

    def test_noiseless_limit(self):
        cfg = SynthConfig(noise_std=0.0, missing_rate=0.0, ar_coefficient=0.0,
                          n_stays=60, hours=4, seed=3)
        cohort = generate_cohort(cfg, generate_taxonomy(cfg))
        by_leaf = {}
        for stay in cohort.stays:
            by_leaf.setdefault(stay.label_code, []).append(stay)
        for leaf, stays in by_leaf.items():
            first = stays[0]
            # constant over time
            assert np.allclose(first.series, first.series[0])
            for other in stays[1:]:
                assert np.array_equal(first.series, other.series)
                assert first.statics == other.statics

    def test_same_seed_identical(self):
        cfg = SynthConfig(n_stays=30, hours=5, seed=11)
        tree = generate_taxonomy(cfg)
        a = generate_cohort(cfg, tree)
        b = generate_cohort(cfg, tree)
        for sa, sb in zip(a.stays, b.stays):
            assert np.array_equal(sa.series, sb.series)
            assert np.array_equal(sa.mask, sb.mask)
            assert sa.statics == sb.statics
            assert sa.label_code == sb.label_code

    def test_between_chapter_distance_exceeds_within(self):
        cfg = SynthConfig(n_stays=400, hours=24, seed=21)
        tree = generate_taxonomy(cfg)
        cohort = generate_cohort(cfg, tree)
        means, l1s, l4s = [], [], []
        for stay in cohort.stays:
            observed = np.where(stay.mask, stay.series, np.nan)
            means.append(np.nanmean(observed, axis=0))
            l1s.append(tree.ancestor_at_level(stay.label_code, 1))
            l4s.append(stay.label_code)
        means = np.array(means)
        cross, same_l1_diff_l4 = [], []
        rng = np.random.default_rng(0)
        idx = rng.choice(len(means), size=(4000, 2))
        for i, j in idx:
            if i == j:
                continue
            d = np.linalg.norm(means[i] - means[j])
            if l1s[i] != l1s[j]:
                cross.append(d)
            elif l4s[i] != l4s[j]:
                same_l1_diff_l4.append(d)
        assert np.mean(cross) > np.mean(same_l1_diff_l4)

    def test_missing_rate_empirical(self):
        cfg = SynthConfig(n_stays=600, hours=12, missing_rate=0.25, seed=4)
        cohort = generate_cohort(cfg, generate_taxonomy(cfg))
        total = sum(s.mask.size for s in cohort.stays)
        missing = sum((~s.mask).sum() for s in cohort.stays)
        assert abs(missing / total - 0.25) < 0.02

    def test_leaf_histogram_long_tailed(self):
        cfg = SynthConfig(n_stays=800, hours=2, seed=5)
        cohort = generate_cohort(cfg, generate_taxonomy(cfg))
        counts = {}
        for stay in cohort.stays:
            counts[stay.label_code] = counts.get(stay.label_code, 0) + 1
        ordered = [counts.get(leaf, 0) for leaf in sorted(counts)]
        assert sorted(ordered, reverse=True)[0] > np.median(ordered) * 3

    def test_planted_signal_contract_l1(self):
        # sigma = (big, 0, 0, 0): stay-mean vectors cluster near-perfectly at L1
        cfg = SynthConfig(signal_strengths=(10.0, 0.0, 0.0, 0.0), n_stays=300,
                          hours=12, seed=6)
        tree = generate_taxonomy(cfg)
        cohort = generate_cohort(cfg, tree)
        means = []
        truth = []
        for stay in cohort.stays:
            observed = np.where(stay.mask, stay.series, np.nan)
            means.append(np.nanmean(observed, axis=0))
            truth.append(tree.ancestor_at_level(stay.label_code, 1))
        result = kmeans_fit(np.array(means), len(set(truth)), seed=0)
        assert v_measure(truth, list(result.assignments))["v"] > 0.95

    def test_parallel_serial_identical(self):
        # per-stay randomness keyed by (seed, index): stay content is
        # independent of generation order
        cfg = SynthConfig(n_stays=20, hours=3, seed=8)
        tree = generate_taxonomy(cfg)
        full = generate_cohort(cfg, tree)
        cfg_small = SynthConfig(n_stays=10, hours=3, seed=8)
        prefix = generate_cohort(cfg_small, generate_taxonomy(cfg_small))
        for sa, sb in zip(prefix.stays, full.stays[:10]):
            assert np.array_equal(sa.series, sb.series)
            assert sa.label_code == sb.label_code
