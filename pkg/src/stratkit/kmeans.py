"""k-Means with k-means++ seeding, Lloyd iterations, and seeded restarts.

All work happens on a lexicographically sorted view of the input so that
results are invariant to input-row permutation; assignments are mapped back
to the caller's order at the end. Nearest-centroid ties break toward the
lowest cluster id, and empty clusters are repaired by promoting the point
farthest from its assigned centroid.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, KGreaterThanN
from .seeding import rng_for


@dataclass
class KmeansResult:
    assignments: np.ndarray  # (N,) cluster ids in [0, k)
    centroids: np.ndarray  # (k, d)
    inertia: float
    iterations_run: int
    inertia_history: list  # per-iteration inertia of the winning restart


def _squared_distances(x, centers):
    # (N, k): ||x||^2 - 2 x.c + ||c||^2, clipped for tiny negative rounding
    d2 = (
        (x * x).sum(axis=1)[:, None]
        - 2.0 * x @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeanspp(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = _squared_distances(x, centers[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        d2 = np.minimum(d2, _squared_distances(x, centers[j : j + 1]).ravel())
    return centers


def _lloyd(x, centers, max_iter, tol):
    n, k = x.shape[0], centers.shape[0]
    # monotonicity is exact in real arithmetic; the slack only absorbs
    # rounding noise of the expanded-form distances at the data's scale
    slack = max(1e-9, float((x * x).sum()) * 1e-12)
    history = []
    assign = None
    for it in range(1, max_iter + 1):
        d2 = _squared_distances(x, centers)
        assign = d2.argmin(axis=1)  # argmin takes the lowest id on ties
        inertia = float(d2[np.arange(n), assign].sum())
        if history:
            assert inertia <= history[-1] + slack, "Lloyd inertia increased"
        history.append(inertia)

        new_centers = centers.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centers[j] = x[members].mean(axis=0)
        # repair empty clusters with the points farthest from their centroid
        empty = [j for j in range(k) if not (assign == j).any()]
        if empty:
            dist_to_own = _squared_distances(x, new_centers)[np.arange(n), assign]
            taken = set()
            for j in empty:
                order = np.argsort(-dist_to_own, kind="stable")
                pick = next(int(i) for i in order if int(i) not in taken)
                taken.add(pick)
                new_centers[j] = x[pick]
                assign[pick] = j
                dist_to_own[pick] = -1.0
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break
    # final assignment against the settled centroids
    d2 = _squared_distances(x, centers)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    if history:
        assert inertia <= history[-1] + slack, "Lloyd inertia increased"
    history.append(inertia)
    return assign, centers, inertia, it, history


def kmeans_fit(vectors, k, seed, max_iter=300, tol=1e-6, n_init=10) -> KmeansResult:
    x = np.asarray(vectors, dtype=float)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KGreaterThanN(f"k={k} exceeds {n} points")

    order = np.lexsort(x.T[::-1])  # sort rows lexicographically, column 0 first
    xs = x[order]

    best = None
    for restart in range(n_init):
        rng = rng_for(seed, "kmeans", restart)
        centers = _kmeanspp(xs, k, rng)
        assign, centers, inertia, iters, history = _lloyd(xs, centers, max_iter, tol)
        if best is None or inertia < best[2]:
            best = (assign, centers, inertia, iters, history)

    assign_sorted, centers, inertia, iters, history = best
    assignments = np.empty(n, dtype=int)
    assignments[order] = assign_sorted
    return KmeansResult(
        assignments=assignments,
        centroids=centers,
        inertia=inertia,
        iterations_run=iters,
        inertia_history=history,
    )


def kmeans_predict(result: KmeansResult, vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=float)
    if x.shape[1] != result.centroids.shape[1]:
        raise DimMismatch(
            f"vectors have dim {x.shape[1]}, centroids have {result.centroids.shape[1]}"
        )
    return _squared_distances(x, result.centroids).argmin(axis=1)
