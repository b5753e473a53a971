import math

import numpy as np
import pytest

from stratkit import errors
from stratkit.embed_stat import StatConfig, embed_stat, window_bounds
from stratkit.preprocess import impute
from tests.conftest import make_stay


class TestWindowBounds:
    def test_even_split(self):
        assert window_bounds(8, 4) == [(0, 2), (2, 4), (4, 6), (6, 8)]

    def test_earlier_windows_take_extra(self):
        assert window_bounds(10, 4) == [(0, 3), (3, 6), (6, 8), (8, 10)]

    def test_t_smaller_than_w(self):
        bounds = window_bounds(2, 4)
        assert bounds == [(0, 1), (1, 2), (2, 2), (2, 2)]
        lengths = [e - s for s, e in bounds]
        assert max(lengths) - min(lengths) <= 1


class TestMoments:
    def test_single_window_moments(self, make_cohort):
        stay = make_stay("s0", [1, 2, 3, 4], "A.1.1.1", statics=[])
        emb = embed_stat(make_cohort([stay], static_names=()), StatConfig(n_windows=1))
        mean, std, lo, hi, frac = emb.vectors[0]
        assert mean == pytest.approx(2.5)
        assert std == pytest.approx(math.sqrt(1.25))
        assert (lo, hi) == (1.0, 4.0)
        assert frac == 1.0

    def test_constant_series(self, make_cohort):
        stay = make_stay("s0", [5, 5], "A.1.1.1", statics=[])
        emb = embed_stat(make_cohort([stay], static_names=()), StatConfig(n_windows=1))
        assert emb.vectors[0].tolist() == [5.0, 0.0, 5.0, 5.0, 1.0]

    def test_dimension_formula(self, make_cohort):
        stay = make_stay("s0", np.ones((5, 2)), "A.1.1.1", statics=[1.0, 2.0, 3.0])
        cohort = make_cohort([stay], feature_names=("a", "b"), static_names=("x", "y", "z"))
        emb = embed_stat(cohort, StatConfig(n_windows=2))
        assert emb.dim == 2 * 2 * 5 + 3

    def test_empty_window_zeros(self, make_cohort):
        stay = make_stay("s0", [7.0], "A.1.1.1", statics=[])
        emb = embed_stat(make_cohort([stay], static_names=()), StatConfig(n_windows=3))
        assert emb.dim == 15
        assert emb.vectors[0][5:].tolist() == [0.0] * 10

    def test_fraction_observed_uses_pre_impute_mask(self, make_cohort):
        stay = make_stay("s0", [1, 2, 3, 4], "A.1.1.1", statics=[],
                         mask=[True, False, False, True])
        cohort = impute(make_cohort([stay], static_names=()), np.array([0.0]))
        emb = embed_stat(cohort, StatConfig(n_windows=1))
        assert emb.vectors[0][4] == pytest.approx(0.5)

    def test_empty_series_error(self, make_cohort):
        stay = make_stay("s0", np.zeros((0, 1)), "A.1.1.1", statics=[])
        with pytest.raises(errors.EmptySeries):
            embed_stat(make_cohort([stay], static_names=()))


class TestProperties:
    def test_permutation_equivariance(self, make_cohort):
        rng = np.random.default_rng(3)
        stays = [make_stay(f"s{i}", rng.normal(size=6), "A.1.1.1", statics=[float(i)])
                 for i in range(5)]
        forward = embed_stat(make_cohort(stays))
        backward = embed_stat(make_cohort(list(reversed(stays))))
        assert np.array_equal(forward.vectors, backward.vectors[::-1])

    def test_dim_constant_across_ragged_stays(self, make_cohort):
        stays = [
            make_stay("s0", [1.0], "A.1.1.1", statics=[0.0]),
            make_stay("s1", np.arange(20.0), "A.1.1.1", statics=[0.0]),
        ]
        emb = embed_stat(make_cohort(stays))
        assert emb.vectors.shape == (2, 4 * 5 * 1 + 1)

    def test_masked_cell_values_influence_only_via_imputation(self, make_cohort):
        # change the stored value under a masked cell, re-impute: same embedding
        mask = [True, False, True, False]
        a = make_stay("s0", [1.0, 111.0, 3.0, 222.0], "A.1.1.1", statics=[], mask=mask)
        b = make_stay("s0", [1.0, -99.0, 3.0, -77.0], "A.1.1.1", statics=[], mask=mask)
        emb_a = embed_stat(impute(make_cohort([a], static_names=()), np.zeros(1)))
        emb_b = embed_stat(impute(make_cohort([b], static_names=()), np.zeros(1)))
        assert np.array_equal(emb_a.vectors, emb_b.vectors)
