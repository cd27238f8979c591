"""k-means clustering, silhouette scoring, and cluster-count selection.

Lloyd iterations with k-means++ seeding minimize the within-cluster sum of
squares; the silhouette score (cohesion vs separation, in [-1, 1]) picks the
cluster count when it is not known upfront.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InsufficientPointsError, InvalidArgumentError

MAX_LLOYD_ITERATIONS = 300
_SILHOUETTE_BLOCK = 2048  # rows of the distance matrix held at once


@dataclass
class KMeansModel:
    centroids: np.ndarray   # (k, d)
    labels: np.ndarray      # (n,)
    inertia: float          # within-cluster sum of squared distances


@dataclass
class SilhouetteReport:
    per_point: np.ndarray   # (n,) values in [-1, 1]
    mean_score: float


def _sq_dists_to_centroids(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances via the expansion trick
    d2 = (
        np.sum(points * points, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids * centroids, axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a chosen centroid
            centroids[i] = points[rng.integers(n)]
            continue
        probs = closest / total
        centroids[i] = points[rng.choice(n, p=probs)]
        closest = np.minimum(closest, np.sum((points - centroids[i]) ** 2, axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    k = len(centroids)
    labels = np.full(len(points), -1)
    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = _sq_dists_to_centroids(points, centroids)
        new_labels = d2.argmin(axis=1)

        # Repair empty clusters: reseed to the point farthest from its centroid.
        assigned = d2[np.arange(len(points)), new_labels]
        for c in range(k):
            if not np.any(new_labels == c):
                far = int(assigned.argmax())
                centroids[c] = points[far]
                new_labels[far] = c
                assigned[far] = 0.0

        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = points[labels == c].mean(axis=0)

    d2 = _sq_dists_to_centroids(points, centroids)
    inertia = float(d2[np.arange(len(points)), labels].sum())
    return centroids, labels, inertia


def kmeans(points, k: int, seed: int, n_restarts: int = 1) -> KMeansModel:
    """Cluster `points` into k groups; needs at least k distinct points.

    Runs Lloyd iterations from a k-means++ seeding until the assignment stops
    changing (or 300 iterations). With ``n_restarts`` > 1 the lowest-inertia
    run wins.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise InvalidArgumentError("points must be a 2-D array")
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    distinct = np.unique(points, axis=0)
    if len(distinct) < k:
        raise InsufficientPointsError(
            f"{len(distinct)} distinct points cannot form {k} clusters"
        )

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_restarts)):
        centroids = _kmeans_pp_init(points, k, rng)
        centroids, labels, inertia = _lloyd(points, centroids.copy())
        if best is None or inertia < best.inertia:
            best = KMeansModel(centroids=centroids, labels=labels, inertia=inertia)
    return best


def silhouette(points, labels) -> SilhouetteReport:
    """Per-point silhouette values s(x) = (b - a) / max(a, b).

    a(x) is the mean distance from x to the other members of its cluster;
    b(x) the smallest mean distance from x to the members of any other
    cluster. Points in singleton clusters score 0. Computed blockwise so the
    full n x n distance matrix is never materialized.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise InvalidArgumentError("silhouette needs at least 2 clusters")

    k = len(uniq)
    onehot = (labels[:, None] == uniq[None, :]).astype(float)   # (n, k)
    sizes = onehot.sum(axis=0)                                   # (k,)
    own = np.searchsorted(uniq, labels)

    n = len(points)
    scores = np.zeros(n)
    for start in range(0, n, _SILHOUETTE_BLOCK):
        stop = min(start + _SILHOUETTE_BLOCK, n)
        # direct per-pair distances: exact zeros for coincident points
        dist = cdist(points[start:stop], points)
        cluster_sums = dist @ onehot                 # (b, k)

        rows = np.arange(stop - start)
        own_block = own[start:stop]
        own_size = sizes[own_block]
        with np.errstate(invalid="ignore", divide="ignore"):
            a = cluster_sums[rows, own_block] / (own_size - 1)
            mean_other = cluster_sums / sizes[None, :]
            mean_other[rows, own_block] = np.inf
            b = mean_other.min(axis=1)
            denom = np.maximum(a, b)
            s = np.where((own_size > 1) & (denom > 0), (b - a) / denom, 0.0)
        scores[start:stop] = np.nan_to_num(s, nan=0.0)

    return SilhouetteReport(per_point=scores, mean_score=float(scores.mean()))


def find_clusters(points, max_k: int, seed: int, n_restarts: int = 1) -> np.ndarray:
    """Centroids of the silhouette-best k-means model over k in [2, max_k].

    k is additionally capped at the number of distinct points. Score ties go
    to the smallest k. With fewer than 2 distinct points the single distinct
    point is returned as one centroid so callers can still place a codeword.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise InvalidArgumentError("points must be a non-empty 2-D array")
    distinct = np.unique(points, axis=0)
    if len(distinct) < 2:
        return distinct[:1].copy()

    cap = min(max_k, len(distinct))
    best_score = -np.inf
    best_centroids = None
    for m in range(2, cap + 1):
        model = kmeans(points, m, seed, n_restarts=n_restarts)
        score = silhouette(points, model.labels).mean_score
        if score > best_score:
            best_score = score
            best_centroids = model.centroids
    return best_centroids
