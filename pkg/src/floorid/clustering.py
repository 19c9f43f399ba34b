"""Grouping sample embeddings into floor clusters.

The primary method is bottom-up agglomerative clustering under average
linkage (mean pairwise Euclidean distance between clusters), merging the
closest pair each round until the requested cluster count remains.  K-means
is available as an alternative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .ingest import Dataset


@dataclass(frozen=True)
class Clustering:
    """Partition of sample nodes into clusters 1..n_clusters.

    ``labels[i]`` is the cluster id of sample i, or 0 for a held-out sample.
    """

    labels: np.ndarray
    n_clusters: int
    holdout: int | None = None

    def members(self, cluster: int) -> np.ndarray:
        """Record indices belonging to a 1-based cluster id."""
        return np.nonzero(self.labels == cluster)[0]

    def member_lists(self) -> list[np.ndarray]:
        return [self.members(c) for c in range(1, self.n_clusters + 1)]

    def cluster_of_sample(self) -> dict[int, int]:
        return {
            int(i): int(c)
            for i, c in enumerate(self.labels)
            if c > 0
        }


def cluster_distance(members_a: np.ndarray, members_b: np.ndarray) -> float:
    """Average linkage: mean pairwise Euclidean distance between clusters."""
    a = np.asarray(members_a, dtype=np.float64)
    b = np.asarray(members_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
        raise ValidationError("clusters must be non-empty 2-D arrays")
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return float(np.sqrt(sq).mean())


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    sq = (
        (points * points).sum(axis=1)[:, None]
        + (points * points).sum(axis=1)[None, :]
        - 2.0 * (points @ points.T)
    )
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, 0.0)
    return np.sqrt(sq)


def _resolve_holdout(n: int, holdout: int | None) -> np.ndarray:
    if holdout is None:
        return np.arange(n)
    if not 0 <= holdout < n:
        raise ValidationError(f"holdout index {holdout} out of range")
    return np.array([i for i in range(n) if i != holdout], dtype=np.int64)


def _agglomerate(
    points: np.ndarray, n_clusters: int
) -> tuple[list[list[int]], list[tuple[int, int]]]:
    """Greedy average-linkage merge loop.

    Distances after a merge follow the Lance-Williams average-linkage update
    (size-weighted mean of the merged rows), which reproduces the mean
    pairwise distance exactly.  Ties on the merge distance pick the
    lexicographically smallest pair of cluster ids, where a cluster's id is
    the smallest point index it contains (the row-major argmin delivers
    exactly that order on the symmetric matrix).  Returns the surviving
    member lists and the merge pair sequence.
    """
    m = points.shape[0]
    dist = pairwise_distances(points)
    np.fill_diagonal(dist, np.inf)
    sizes = np.ones(m, dtype=np.int64)
    membership: list[list[int]] = [[i] for i in range(m)]
    merges: list[tuple[int, int]] = []

    for _ in range(m - n_clusters):
        flat = int(np.argmin(dist))
        i, j = divmod(flat, m)
        if i > j:
            i, j = j, i
        merges.append((i, j))
        si, sj = sizes[i], sizes[j]
        new_row = (si * dist[i] + sj * dist[j]) / (si + sj)
        dist[i, :] = new_row
        dist[:, i] = new_row
        dist[i, i] = np.inf
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        sizes[i] = si + sj
        membership[i].extend(membership[j])
        membership[j] = []

    survivors = [members for members in membership if members]
    return survivors, merges


def hierarchical_cluster(
    embeddings: np.ndarray,
    n_clusters: int,
    holdout: int | None = None,
) -> Clustering:
    """Agglomerative average-linkage clustering down to ``n_clusters``.

    ``holdout`` excludes one sample from the clustering; it keeps label 0 so
    its embedding can still be placed against the finished clusters.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = embeddings.shape[0]
    active_idx = _resolve_holdout(n, holdout)
    if len(active_idx) < n_clusters:
        raise ValidationError(f"need at least {n_clusters} points, got {len(active_idx)}")
    survivors, _ = _agglomerate(embeddings[active_idx], n_clusters)
    labels = np.zeros(n, dtype=np.int64)
    for cluster_id, members in enumerate(survivors, start=1):
        labels[active_idx[members]] = cluster_id
    return Clustering(labels=labels, n_clusters=n_clusters, holdout=holdout)


def merge_sequence(embeddings: np.ndarray, n_clusters: int) -> list[tuple[int, int]]:
    """The (i, j) merge pairs performed by hierarchical_cluster, for oracle
    comparison; ids are the smallest member indices of the merged clusters."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] < n_clusters:
        raise ValidationError("fewer points than clusters")
    _, merges = _agglomerate(embeddings, n_clusters)
    return merges


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest_sq = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest_sq.sum()
        if total <= 0:
            centers[c] = points[int(rng.integers(n))]
            continue
        probs = closest_sq / total
        idx = int(rng.choice(n, p=probs))
        centers[c] = points[idx]
        np.minimum(closest_sq, ((points - centers[c]) ** 2).sum(axis=1), out=closest_sq)
    return centers


def lloyd_iterations(
    points: np.ndarray,
    centers: np.ndarray,
    max_iter: int = 300,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm to an assignment fixed point; returns labels,
    centers, and the within-cluster sum of squares after each iteration."""
    k = centers.shape[0]
    labels = np.full(points.shape[0], -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iter):
        sq = (
            (points * points).sum(axis=1)[:, None]
            + (centers * centers).sum(axis=1)[None, :]
            - 2.0 * (points @ centers.T)
        )
        new_labels = np.argmin(sq, axis=1)
        for c in range(k):
            mask = new_labels == c
            if not mask.any():
                # Reseed an empty cluster at the point farthest from its center.
                worst = int(np.argmax(np.take_along_axis(sq, new_labels[:, None], 1)))
                centers[c] = points[worst]
                new_labels[worst] = c
                mask = new_labels == c
            centers[c] = points[mask].mean(axis=0)
        wcss = float(((points - centers[new_labels]) ** 2).sum())
        history.append(wcss)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers, history


def kmeans_cluster(
    embeddings: np.ndarray,
    n_clusters: int,
    rng: np.random.Generator,
    holdout: int | None = None,
) -> Clustering:
    """Seeded k-means++ / Lloyd clustering over sample embeddings."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = embeddings.shape[0]
    active_idx = _resolve_holdout(n, holdout)
    points = embeddings[active_idx]
    if len(points) < n_clusters:
        raise ValidationError(f"need at least {n_clusters} points, got {len(points)}")
    centers = _kmeans_pp_init(points, n_clusters, rng)
    raw_labels, _, _ = lloyd_iterations(points, centers)
    labels = np.zeros(n, dtype=np.int64)
    labels[active_idx] = raw_labels + 1
    return Clustering(labels=labels, n_clusters=n_clusters, holdout=holdout)


def mac_frequency_profile(clustering: Clustering, dataset: Dataset) -> np.ndarray:
    """Per-cluster MAC detection counts, shape (n_clusters, n_macs).

    Entry (i, k) counts the records of cluster i+1 whose readings contain
    MAC k (each record contributes at most once per MAC); columns follow
    ``dataset.mac_universe`` order.
    """
    mac_index = {mac: k for k, mac in enumerate(dataset.mac_universe)}
    freq = np.zeros((clustering.n_clusters, len(mac_index)), dtype=np.int64)
    for idx, rec in enumerate(dataset.records):
        cluster = int(clustering.labels[idx])
        if cluster == 0:
            continue
        for mac in rec.readings:
            freq[cluster - 1, mac_index[mac]] += 1
    return freq


def cluster_mac_sets(clustering: Clustering, dataset: Dataset) -> list[set[str]]:
    """MACs detected in each cluster (1-based order)."""
    sets: list[set[str]] = [set() for _ in range(clustering.n_clusters)]
    for idx, rec in enumerate(dataset.records):
        cluster = int(clustering.labels[idx])
        if cluster == 0:
            continue
        sets[cluster - 1].update(rec.readings)
    return sets
