"""Pseudo-label generation: k-means, silhouette scan, and PCA projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DegenerateClustering,
    DimensionMismatch,
    InvalidTargetDim,
    TooFewPoints,
)
from .features import FeatureMatrix

SILHOUETTE_CAP = 2000


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (k, d)
    assignments: np.ndarray  # (n,) ints in [0, k)
    inertia: float
    iterations_run: int


def _kmeans_pp_seeds(rows: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = rows.shape[0]
    centers = np.empty((k, rows.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = rows[first]
    closest = cdist(rows, centers[:1], "sqeuclidean").ravel()
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = rows[idx]
        np.minimum(closest, cdist(rows, centers[j : j + 1], "sqeuclidean").ravel(), out=closest)
    return centers


def _lloyd(rows: np.ndarray, centers: np.ndarray, max_iters: int) -> KMeansResult:
    k = centers.shape[0]
    assignments = np.full(rows.shape[0], -1, dtype=np.int64)
    inertia = np.inf
    iterations = 0
    for iteration in range(1, max_iters + 1):
        iterations = iteration
        dist_sq = cdist(rows, centers, "sqeuclidean")
        new_assignments = dist_sq.argmin(axis=1)
        new_inertia = float(dist_sq[np.arange(rows.shape[0]), new_assignments].sum())
        # Lloyd steps and farthest-point reseeding only ever move points
        # closer to their centroid, so the objective cannot rise.
        assert new_inertia <= inertia * (1.0 + 1e-12) + 1e-12
        converged = bool(np.array_equal(new_assignments, assignments))
        assignments = new_assignments
        inertia = new_inertia
        if converged:
            break
        per_point = dist_sq[np.arange(rows.shape[0]), assignments]
        claimed: list[int] = []
        for j in range(k):
            members = rows[assignments == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
            else:
                # Re-seed an empty cluster on the point currently farthest
                # from its assigned centroid; downstream bookkeeping needs
                # exactly k non-empty clusters.
                order = np.argsort(per_point)[::-1]
                for candidate in order:
                    if candidate not in claimed:
                        break
                centers[j] = rows[candidate]
                claimed.append(int(candidate))
                assignments[candidate] = j
    return KMeansResult(centroids=centers, assignments=assignments, inertia=inertia, iterations_run=iterations)


def kmeans(
    data: FeatureMatrix,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    n_init: int = 10,
) -> KMeansResult:
    """Best of `n_init` k-means++ seeded Lloyd runs, deterministic per seed.

    Iterates to an assignment fixpoint or `max_iters`; empty clusters are
    repaired by farthest-point reseeding so exactly k clusters survive.

    Raises
    ------
    TooFewPoints : fewer rows than clusters.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if data.n < k:
        raise TooFewPoints(f"{data.n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    best: KMeansResult | None = None
    for _ in range(max(1, n_init)):
        centers = _kmeans_pp_seeds(data.data, k, rng)
        result = _lloyd(data.data, centers.copy(), max_iters)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def silhouette_score(
    data: FeatureMatrix,
    assignments,
    max_points: int = SILHOUETTE_CAP,
    seed: int = 0,
) -> float:
    """Mean silhouette over points, by the O(n^2) pairwise definition.

    s(i) = (b - a) / max(a, b) with a the mean distance to the point's own
    cluster and b the smallest mean distance to another cluster. Singleton
    clusters and the a = b = 0 case contribute 0. Above `max_points` rows a
    seeded subsample of that size is scored instead.

    Raises
    ------
    DegenerateClustering : fewer than two distinct clusters.
    """
    labels = np.asarray(assignments, dtype=np.int64)
    if labels.shape != (data.n,):
        raise DimensionMismatch("assignments length must match the number of rows")
    if data.n < 2 or np.unique(labels).size < 2:
        raise DegenerateClustering("silhouette needs at least two clusters")
    rows = data.data
    if data.n > max_points:
        rng = np.random.default_rng(seed)
        keep = rng.choice(data.n, size=max_points, replace=False)
        keep.sort()
        rows = rows[keep]
        labels = labels[keep]
        if np.unique(labels).size < 2:
            raise DegenerateClustering("subsample collapsed to a single cluster")

    n = rows.shape[0]
    dist = cdist(rows, rows)
    cluster_ids = np.unique(labels)
    sums = np.stack([dist[:, labels == c].sum(axis=1) for c in cluster_ids], axis=1)
    counts = np.array([(labels == c).sum() for c in cluster_ids])
    own = np.searchsorted(cluster_ids, labels)

    scores = np.zeros(n, dtype=np.float64)
    for i in range(n):
        size = counts[own[i]]
        if size <= 1:
            continue
        a = sums[i, own[i]] / (size - 1)
        other = [sums[i, j] / counts[j] for j in range(cluster_ids.size) if j != own[i]]
        b = min(other)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def estimate_num_classes(data: FeatureMatrix, k_min: int, k_max: int, seed: int = 0) -> int:
    """Scan k in [k_min, k_max] and return the silhouette-maximizing count.

    Ties break toward the smaller k.
    """
    if not (2 <= k_min <= k_max <= data.n - 1):
        raise ValueError(f"need 2 <= k_min <= k_max <= n-1, got [{k_min}, {k_max}] with n={data.n}")
    best_k = k_min
    best_score = -np.inf
    for k in range(k_min, k_max + 1):
        result = kmeans(data, k, seed=seed)
        score = silhouette_score(data, result.assignments, seed=seed)
        if score > best_score:
            best_score = score
            best_k = k
    return best_k


@dataclass
class PcaProjector:
    """Linear projection onto the top principal directions."""

    mean: np.ndarray  # (d_in,)
    components: np.ndarray  # (d_out, d_in), orthonormal rows
    explained_variance: np.ndarray  # (d_out,), non-increasing

    @property
    def d_in(self) -> int:
        return self.mean.size

    @property
    def d_out(self) -> int:
        return self.components.shape[0]

    def inverse(self, projected: np.ndarray) -> np.ndarray:
        return projected @ self.components + self.mean


def pca_fit(data: FeatureMatrix, d_out: int) -> PcaProjector:
    """Top-d_out right singular vectors of the centered data.

    Component signs are fixed so the largest-magnitude coordinate of each
    row is positive, making the projector deterministic across runs.

    Raises
    ------
    InvalidTargetDim : d_out outside [1, min(n, d_in)].
    """
    if not (1 <= d_out <= min(data.n, data.dim)):
        raise InvalidTargetDim(
            f"d_out={d_out} outside [1, min(n={data.n}, d={data.dim})]"
        )
    mean = data.data.mean(axis=0)
    centered = data.data - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:d_out].copy()
    anchors = np.abs(components).argmax(axis=1)
    signs = np.sign(components[np.arange(d_out), anchors])
    signs[signs == 0] = 1.0
    components *= signs[:, None]
    if data.n > 1:
        explained = (singular[:d_out] ** 2) / (data.n - 1)
    else:
        explained = np.zeros(d_out, dtype=np.float64)
    return PcaProjector(mean=mean, components=components, explained_variance=explained)


def pca_transform(projector: PcaProjector, data: FeatureMatrix) -> FeatureMatrix:
    """Project rows; labels pass through unchanged."""
    if data.dim != projector.d_in:
        raise DimensionMismatch(
            f"data dim {data.dim} does not match projector input dim {projector.d_in}"
        )
    projected = (data.data - projector.mean) @ projector.components.T
    return FeatureMatrix(projected, data.labels.copy())
