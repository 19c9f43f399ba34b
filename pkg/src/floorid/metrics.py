"""Clustering and ordering quality metrics: ARI, NMI, Jaro edit distance."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMappingError, ValidationError


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # (n_x_clusters, n_y_clusters) intersection sizes
    x_sizes: np.ndarray
    y_sizes: np.ndarray
    n: int


def contingency(labels_x, labels_y) -> ContingencyTable:
    """Intersection-count table between two partitions given as label lists."""
    labels_x = list(labels_x)
    labels_y = list(labels_y)
    if len(labels_x) != len(labels_y):
        raise ValidationError(
            f"partitions cover different universes: {len(labels_x)} vs {len(labels_y)} elements"
        )
    if not labels_x:
        raise ValidationError("empty partitions")
    xs = sorted(set(labels_x))
    ys = sorted(set(labels_y))
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    counts = np.zeros((len(xs), len(ys)), dtype=np.int64)
    for a, b in zip(labels_x, labels_y):
        counts[xi[a], yi[b]] += 1
    return ContingencyTable(
        counts=counts,
        x_sizes=counts.sum(axis=1),
        y_sizes=counts.sum(axis=0),
        n=len(labels_x),
    )


def _comb2(k: int) -> int:
    return k * (k - 1) // 2


def ari(labels_x, labels_y) -> float:
    """Adjusted Rand index between two partitions; 1 when the denominator
    vanishes (both partitions trivial)."""
    table = contingency(labels_x, labels_y)
    sum_cells = sum(_comb2(int(v)) for v in table.counts.ravel())
    sum_x = sum(_comb2(int(v)) for v in table.x_sizes)
    sum_y = sum(_comb2(int(v)) for v in table.y_sizes)
    pairs = _comb2(table.n)
    if pairs == 0:
        return 1.0
    expected = (sum_x * sum_y) / pairs
    maximum = 0.5 * (sum_x + sum_y)
    if maximum == expected:
        return 1.0
    return (sum_cells - expected) / (maximum - expected)


def mutual_information(labels_x, labels_y) -> float:
    """MI between partitions in nats, by direct summation over the table."""
    table = contingency(labels_x, labels_y)
    n = table.n
    log_n = math.log(n)
    mi = 0.0
    for i in range(table.counts.shape[0]):
        for j in range(table.counts.shape[1]):
            nij = int(table.counts[i, j])
            if nij == 0:
                continue
            # log(n * nij / (|X_i| |Y_j|)) grouped so that the identity
            # partition reproduces the entropy terms bit for bit.
            mi += (nij / n) * (
                (log_n - math.log(int(table.x_sizes[i])))
                + (math.log(nij) - math.log(int(table.y_sizes[j])))
            )
    return mi


def entropy(sizes, n: int) -> float:
    """Partition entropy in nats from cluster sizes."""
    h = 0.0
    log_n = math.log(n)
    for s in sizes:
        s = int(s)
        if s > 0:
            h += (s / n) * (log_n - math.log(s))
    return h


def nmi(labels_x, labels_y) -> float:
    """Normalized mutual information 2*MI / (H(X) + H(Y)); 1 when both
    entropies are zero."""
    table = contingency(labels_x, labels_y)
    hx = entropy(table.x_sizes, table.n)
    hy = entropy(table.y_sizes, table.n)
    if hx == 0.0 and hy == 0.0:
        return 1.0
    mi = mutual_information(labels_x, labels_y)
    return 2.0 * mi / (hx + hy)


def _check_permutation(seq, name: str) -> list[int]:
    seq = [int(v) for v in seq]
    if sorted(seq) != list(range(1, len(seq) + 1)):
        raise ValidationError(f"{name} is not a permutation of 1..{len(seq)}: {seq}")
    return seq


def edit_distance(seq_x, seq_y) -> float:
    """Jaro similarity between two equal-length permutations.

    Matches are equal symbols within a window of floor(max_len / 2) - 1
    positions; t is half the number of matched symbols that appear in a
    different relative order.  No prefix bonus.
    """
    sx = _check_permutation(seq_x, "predicted sequence")
    sy = _check_permutation(seq_y, "ground-truth sequence")
    if len(sx) != len(sy):
        raise ValidationError(f"sequence lengths differ: {len(sx)} vs {len(sy)}")
    n = len(sx)
    window = max(len(sx), len(sy)) // 2 - 1
    matched_y = [False] * n
    matches_x: list[int] = []
    for i, v in enumerate(sx):
        lo = max(0, i - window)
        hi = min(n, i + window + 1)
        for j in range(lo, hi):
            if not matched_y[j] and sy[j] == v:
                matched_y[j] = True
                matches_x.append(v)
                break
    m = len(matches_x)
    if m == 0:
        return 0.0
    matches_y = [sy[j] for j in range(n) if matched_y[j]]
    out_of_order = sum(1 for a, b in zip(matches_x, matches_y) if a != b)
    t = out_of_order / 2.0
    return (m / len(sx) + m / len(sy) + (m - t) / m) / 3.0


def majority_floor(floors: list[int]) -> int:
    """Majority vote with ties broken toward the smallest floor."""
    if not floors:
        raise ValidationError("majority vote over an empty cluster")
    counts = Counter(floors)
    best = max(counts.values())
    return min(f for f, c in counts.items() if c == best)


def ordering_to_sequence(
    predicted_floors, true_floors, floor_count: int
) -> tuple[list[int], list[int]]:
    """Predicted and ground-truth index sequences for edit-distance scoring.

    Takes aligned per-record predicted and ground-truth floors.  The cluster
    on each predicted floor is identified by the majority ground-truth floor
    of its members (ties toward the smallest floor); the predicted sequence
    lists those identities in predicted-floor order, the ground-truth
    sequence is 1..N.
    """
    predicted_floors = [int(v) for v in predicted_floors]
    true_floors = [int(v) for v in true_floors]
    if len(predicted_floors) != len(true_floors):
        raise ValidationError("predicted and ground-truth label lists differ in length")
    groups: dict[int, list[int]] = {p: [] for p in range(1, floor_count + 1)}
    for p, t in zip(predicted_floors, true_floors):
        if p not in groups:
            raise ValidationError(f"predicted floor {p} outside 1..{floor_count}")
        groups[p].append(t)
    seq_x = [majority_floor(groups[p]) for p in range(1, floor_count + 1)]
    if len(set(seq_x)) != floor_count:
        raise DegenerateMappingError(
            f"two clusters map to the same majority floor: {seq_x}"
        )
    return seq_x, list(range(1, floor_count + 1))
