import itertools

import numpy as np
import pytest

from stratkit import errors
from stratkit.kmeans import kmeans_fit, kmeans_predict


def brute_force_best_inertia(points, k):
    """Minimum inertia over every assignment of points to k groups."""
    best = float("inf")
    n = len(points)
    for labels in itertools.product(range(k), repeat=n):
        total = 0.0
        for j in range(k):
            members = points[[i for i in range(n) if labels[i] == j]]
            if len(members):
                centroid = members.mean(axis=0)
                total += ((members - centroid) ** 2).sum()
        best = min(best, total)
    return best


class TestFit:
    def test_two_pairs_brute_force(self):
        points = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        result = kmeans_fit(points, 2, seed=0)
        assert result.inertia == pytest.approx(1.0)
        assert result.inertia == pytest.approx(brute_force_best_inertia(points, 2))
        assert result.assignments[0] == result.assignments[1]
        assert result.assignments[2] == result.assignments[3]
        assert result.assignments[0] != result.assignments[2]

    def test_k_equals_n(self):
        rng = np.random.default_rng(0)
        points = rng.normal(size=(6, 3))
        result = kmeans_fit(points, 6, seed=1)
        assert result.inertia == pytest.approx(0.0, abs=1e-12)

    def test_k_one_centroid_is_mean(self):
        rng = np.random.default_rng(1)
        points = rng.normal(size=(9, 2))
        result = kmeans_fit(points, 1, seed=2)
        assert np.allclose(result.centroids[0], points.mean(axis=0))

    def test_k_greater_than_n(self):
        with pytest.raises(errors.KGreaterThanN):
            kmeans_fit(np.zeros((3, 2)), 4, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(50, 4))
        a = kmeans_fit(points, 5, seed=7)
        b = kmeans_fit(points, 5, seed=7)
        assert np.array_equal(a.assignments, b.assignments)
        assert a.inertia == b.inertia

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(3)
        points = rng.normal(size=(40, 3))
        perm = rng.permutation(40)
        a = kmeans_fit(points, 4, seed=5)
        b = kmeans_fit(points[perm], 4, seed=5)
        assert a.inertia == b.inertia
        assert np.array_equal(a.assignments[perm], b.assignments)

    def test_inertia_history_non_increasing(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(100, 5))
        for seed in range(3):
            result = kmeans_fit(points, 6, seed=seed, n_init=1)
            history = result.inertia_history
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_reported_inertia_matches_recomputed(self):
        rng = np.random.default_rng(5)
        points = rng.normal(size=(60, 3))
        result = kmeans_fit(points, 4, seed=3)
        recomputed = sum(
            ((points[i] - result.centroids[result.assignments[i]]) ** 2).sum()
            for i in range(len(points))
        )
        assert abs(result.inertia - recomputed) < 1e-9

    def test_duplicate_points_with_k_n(self):
        points = np.array([[1.0, 1.0]] * 4)
        result = kmeans_fit(points, 4, seed=0)
        assert result.inertia == pytest.approx(0.0, abs=1e-12)


class TestPredict:
    def test_training_points_keep_assignment(self):
        rng = np.random.default_rng(6)
        points = np.vstack([rng.normal(0, 0.2, (20, 2)), rng.normal(8, 0.2, (20, 2))])
        result = kmeans_fit(points, 2, seed=1)
        assert np.array_equal(kmeans_predict(result, points), result.assignments)

    def test_equidistant_tie_goes_low(self):
        result = kmeans_fit(np.array([[0.0], [2.0]]), 2, seed=0)
        midpoint = np.array([[1.0]])
        assert kmeans_predict(result, midpoint)[0] == 0

    def test_epsilon_side(self):
        result = kmeans_fit(np.array([[0.0], [2.0]]), 2, seed=0)
        lo = float(np.argmin(result.centroids.ravel()))
        cluster_of_lo = int(kmeans_predict(result, np.array([[0.9]]))[0])
        cluster_of_hi = int(kmeans_predict(result, np.array([[1.1]]))[0])
        assert cluster_of_lo != cluster_of_hi

    def test_dim_mismatch(self):
        result = kmeans_fit(np.zeros((4, 3)), 2, seed=0)
        with pytest.raises(errors.DimMismatch):
            kmeans_predict(result, np.zeros((2, 5)))
