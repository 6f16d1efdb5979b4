"""Distance, neighborhood, and clustering primitives.

Everything here is deterministic given its inputs (plus an explicit
generator for the seeded routines) and breaks ties by lowest index, so
parallel and serial callers agree bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CHUNK = 512


def pairwise_sq_dist(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Squared Euclidean distances between rows of ``a`` and rows of ``b``.

    Uses the expansion |x-y|^2 = |x|^2 - 2x.y + |y|^2, clamped at zero.  When
    ``b is None`` the matrix is symmetrized exactly and the diagonal zeroed.
    """
    a = np.asarray(a, dtype=np.float64)
    self_mode = b is None
    if self_mode:
        b = a
    b = np.asarray(b, dtype=np.float64)
    aa = np.einsum("ij,ij->i", a, a)
    bb = aa if self_mode else np.einsum("ij,ij->i", b, b)
    d = aa[:, None] - 2.0 * (a @ b.T) + bb[None, :]
    np.maximum(d, 0.0, out=d)
    if self_mode:
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
    return d


def knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest neighbors of each row (self excluded).

    Row i is sorted by (distance to point i, index), so distance ties
    resolve to the lower index.  Requires k < n.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, n-1], got k={k}, n={n}")
    d = pairwise_sq_dist(points)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :k]


def knn(points: np.ndarray, index: int, k: int) -> np.ndarray:
    """Neighbors of one point, sorted by (distance, index), self excluded."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, n-1], got k={k}, n={n}")
    d = pairwise_sq_dist(points[index:index + 1], points)[0]
    d[index] = np.inf
    return np.argsort(d, kind="stable")[:k]


def typicality(points: np.ndarray, k: int) -> np.ndarray:
    """Inverse mean Euclidean distance to each point's k nearest neighbors.

    A point in a dense region has small neighbor distances and hence high
    typicality.  Neighbor distances of zero (duplicate points) floor the mean
    at 1e-12 before inversion.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, n-1], got k={k}, n={n}")
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        d = pairwise_sq_dist(points[start:stop], points)
        # exclude self by distance: self sits at column start+i
        for i in range(stop - start):
            d[i, start + i] = np.inf
        # the dot trick is accurate enough to pick the neighbors but loses
        # digits on near pairs, so recompute the k kept distances directly
        idx = np.argpartition(d, k - 1, axis=1)[:, :k]
        diff = points[start:stop, None, :] - points[idx]
        nearest = np.einsum("ijk,ijk->ij", diff, diff)
        mean_dist = np.sqrt(nearest).mean(axis=1)
        out[start:stop] = 1.0 / np.maximum(mean_dist, 1e-12)
    return out


def kmeans_pp_indices(points: np.ndarray, k: int, rng: np.random.Generator,
                      first_weights: np.ndarray | None = None) -> np.ndarray:
    """k-means++ style seeding: return indices of k chosen rows.

    The first index is drawn uniformly, or proportionally to
    ``first_weights`` when given; each later index is drawn with probability
    proportional to squared distance from the chosen set.  If every remaining
    distance is zero the lowest unchosen index is taken.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, n], got k={k}, n={n}")

    chosen = np.zeros(n, dtype=bool)
    picks = np.empty(k, dtype=np.int64)

    if first_weights is not None:
        w = np.asarray(first_weights, dtype=np.float64)
        total = w.sum()
        if total > 0:
            u = rng.random() * total
            first = int(np.searchsorted(np.cumsum(w), u, side="right"))
            first = min(first, n - 1)
        else:
            first = 0
    else:
        first = int(rng.integers(n))
    picks[0] = first
    chosen[first] = True

    if k == 1:
        return picks
    d2 = pairwise_sq_dist(points, points[first:first + 1])[:, 0]
    for t in range(1, k):
        w = np.where(chosen, 0.0, d2)
        total = w.sum()
        if total > 0:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
            idx = min(idx, n - 1)
            while chosen[idx]:
                idx = (idx + 1) % n
        else:
            idx = int(np.flatnonzero(~chosen)[0])
        picks[t] = idx
        chosen[idx] = True
        np.minimum(d2, pairwise_sq_dist(points, points[idx:idx + 1])[:, 0], out=d2)
    return picks


@dataclass
class Clustering:
    """Result of Lloyd's algorithm: every cluster is non-empty."""

    centroids: np.ndarray     # (k, dim)
    assignments: np.ndarray   # (n,) ints in [0, k)
    inertia: float            # sum of squared distances to assigned centroid

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = pairwise_sq_dist(points, centroids)
    return np.argmin(d, axis=1)


def _repair_empty(points: np.ndarray, centroids: np.ndarray,
                  assignments: np.ndarray) -> np.ndarray:
    """Give every empty cluster one point: the point farthest from its own
    centroid among clusters holding >= 2 members (ties to lowest index)."""
    k = centroids.shape[0]
    counts = np.bincount(assignments, minlength=k)
    for c in np.flatnonzero(counts == 0):
        eligible = np.flatnonzero(counts[assignments] >= 2)
        gaps = np.einsum("ij,ij->i", points[eligible] - centroids[assignments[eligible]],
                         points[eligible] - centroids[assignments[eligible]])
        steal = eligible[int(np.argmax(gaps))]
        counts[assignments[steal]] -= 1
        assignments[steal] = c
        counts[c] = 1
        centroids[c] = points[steal]
    return assignments


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iters: int = 100, tol: float = 1e-6) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding and empty-cluster repair.

    Stops when the largest centroid shift falls below ``tol`` (or is exactly
    zero), or after ``max_iters`` sweeps.  Guarantees k non-empty clusters
    for any k <= n.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, n], got k={k}, n={n}")

    centroids = points[kmeans_pp_indices(points, k, rng)].copy()
    assignments = _assign(points, centroids)
    assignments = _repair_empty(points, centroids, assignments)
    for _ in range(max_iters):
        new_centroids = centroids.copy()
        for c in range(k):
            members = assignments == c
            new_centroids[c] = points[members].mean(axis=0)
        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        assignments = _assign(points, centroids)
        assignments = _repair_empty(points, centroids, assignments)
        if shift < tol or shift == 0.0:
            break
    gaps = points - centroids[assignments]
    inertia = float(np.einsum("ij,ij->", gaps, gaps))
    return Clustering(centroids=centroids, assignments=assignments, inertia=inertia)


def k_center_greedy(points: np.ndarray, covered: np.ndarray, budget: int) -> list[int]:
    """Farthest-first traversal: pick ``budget`` uncovered indices, each
    maximizing its distance to the covered-plus-picked set.

    With no covered points the first pick is index 0 (the distance to an
    empty set is infinite for everyone; lowest index wins).  Ties at every
    step break to the lowest index.
    """
    points = np.asarray(points, dtype=np.float64)
    covered = np.asarray(covered, dtype=bool).copy()
    n = points.shape[0]
    candidates = int((~covered).sum())
    if budget > candidates:
        raise ValueError(f"budget {budget} exceeds {candidates} uncovered points")

    if covered.any():
        d2 = pairwise_sq_dist(points, points[covered]).min(axis=1)
    else:
        d2 = np.full(n, np.inf)
    picks = []
    for _ in range(budget):
        masked = np.where(covered, -np.inf, d2)
        idx = int(np.argmax(masked))
        picks.append(idx)
        covered[idx] = True
        np.minimum(d2, pairwise_sq_dist(points, points[idx:idx + 1])[:, 0], out=d2)
    return picks
