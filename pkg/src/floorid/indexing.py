"""Cluster-to-floor indexing via signal spillover.

Clusters from adjacent floors share more (and more frequently seen) MACs, so
ordering clusters to maximize the summed similarity of consecutive pairs
recovers the floor order.  That maximization is a shortest-Hamiltonian-path
problem once edge costs are set to 1 - similarity and edges into the fixed
start node are free; it is solved exactly by bitmask dynamic programming or
approximately by restarted 2-opt local search.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .errors import (
    AmbiguousOrientationError,
    MiddleFloorAnchorError,
    ValidationError,
)

EXACT_SOLVER_MAX = 20  # bitmask DP budget
AUTO_EXACT_MAX = 12  # auto solver switches to 2-opt above this


def jaccard_plain(macs_a: set, macs_b: set) -> float:
    """Set-based Jaccard coefficient; 0 when both sets are empty."""
    union = len(macs_a | macs_b)
    if union == 0:
        return 0.0
    return len(macs_a & macs_b) / union


def jaccard_adapted(freq_a: np.ndarray, freq_b: np.ndarray) -> float:
    """Frequency-weighted Jaccard coefficient between two clusters.

    ``freq_a[k]`` counts the records of cluster a that detected MAC k; the
    rows must be aligned over a common MAC indexing.  The shared count is the
    sum of per-MAC frequency products; the unshared count scales each
    one-sided frequency by the other cluster's average frequency over the m
    MACs of the pair's union.  Result is shared / (shared + unshared), with 0
    when both counts vanish.
    """
    freq_a = np.asarray(freq_a, dtype=np.float64)
    freq_b = np.asarray(freq_b, dtype=np.float64)
    if freq_a.shape != freq_b.shape:
        raise ValidationError("frequency rows have mismatched shapes")
    in_a = freq_a > 0
    in_b = freq_b > 0
    m = int(np.count_nonzero(in_a | in_b))
    if m == 0:
        return 0.0
    mean_a = freq_a.sum() / m
    mean_b = freq_b.sum() / m
    shared = float(freq_a @ freq_b)
    diff = float(freq_b[~in_a].sum() * mean_a + freq_a[~in_b].sum() * mean_b)
    if shared + diff == 0.0:
        return 0.0
    return shared / (shared + diff)


def build_similarity(freq_table: np.ndarray, method: str = "adapted") -> np.ndarray:
    """Symmetric cluster-similarity matrix from the (N, n_macs) frequency table."""
    freq_table = np.asarray(freq_table, dtype=np.float64)
    n = freq_table.shape[0]
    sim = np.zeros((n, n), dtype=np.float64)
    if method == "adapted":
        pair = lambda i, j: jaccard_adapted(freq_table[i], freq_table[j])
    elif method == "plain":
        sets = [set(np.nonzero(freq_table[i] > 0)[0].tolist()) for i in range(n)]
        pair = lambda i, j: jaccard_plain(sets[i], sets[j])
    else:
        raise ValidationError(f"unknown similarity method: {method!r}")
    for i in range(n):
        for j in range(i + 1, n):
            sim[i, j] = sim[j, i] = pair(i, j)
    return sim


@dataclass(frozen=True)
class TspInstance:
    """Shortest-Hamiltonian-path instance over clusters.

    ``weights[i, j]`` is 1 - similarity for j != start and 0 for j == start,
    which makes a round tour from ``start`` equivalent to a path.
    """

    weights: np.ndarray
    start: int

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_similarity(cls, sim: np.ndarray, start: int) -> "TspInstance":
        sim = np.asarray(sim, dtype=np.float64)
        n = sim.shape[0]
        if sim.shape != (n, n):
            raise ValidationError("similarity matrix must be square")
        if not 0 <= start < n:
            raise ValidationError(f"start cluster {start} out of range")
        w = 1.0 - sim
        np.fill_diagonal(w, 0.0)
        w[:, start] = 0.0
        return cls(weights=w, start=start)


@dataclass(frozen=True)
class PathSolution:
    """Cluster visit order (0-based, order[0] == start) and its path cost."""

    order: tuple[int, ...]
    cost: float


def path_cost(weights: np.ndarray, order) -> float:
    cost = 0.0
    for a, b in zip(order, order[1:]):
        cost += weights[a, b]
    return cost


def solve_exact(instance: TspInstance) -> PathSolution:
    """Minimum-cost Hamiltonian path from the start node via bitmask DP.

    ``best[mask][last]`` is the cheapest completion of a partial path that
    has visited ``mask`` and currently sits at ``last``; reconstructing from
    the front and preferring the smallest next node yields the
    lexicographically smallest optimal order.
    """
    n = instance.size
    if not 3 <= n <= EXACT_SOLVER_MAX:
        raise ValidationError(f"exact solver supports 3..{EXACT_SOLVER_MAX} clusters, got {n}")
    w = instance.weights
    start = instance.start
    full = (1 << n) - 1
    best = np.full((1 << n, n), np.inf, dtype=np.float64)
    best[full, :] = 0.0

    masks_by_size: list[list[int]] = [[] for _ in range(n + 1)]
    for mask in range(1 << n):
        if mask & (1 << start):
            masks_by_size[bin(mask).count("1")].append(mask)

    for size in range(n - 1, 0, -1):
        for mask in masks_by_size[size]:
            rest = [v for v in range(n) if not mask & (1 << v)]
            for last in range(n):
                if not mask & (1 << last):
                    continue
                acc = np.inf
                for nxt in rest:
                    cand = w[last, nxt] + best[mask | (1 << nxt), nxt]
                    if cand < acc:
                        acc = cand
                best[mask, last] = acc

    order = [start]
    mask = 1 << start
    while len(order) < n:
        cur = order[-1]
        target = best[mask, cur]
        for nxt in range(n):
            if mask & (1 << nxt):
                continue
            if w[cur, nxt] + best[mask | (1 << nxt), nxt] == target:
                order.append(nxt)
                mask |= 1 << nxt
                break
        else:
            raise AssertionError("path reconstruction failed")
    return PathSolution(order=tuple(order), cost=float(best[1 << start, start]))


def solve_brute_force(instance: TspInstance) -> PathSolution:
    """Exhaustive permutation search; reference oracle for small instances."""
    n = instance.size
    others = [v for v in range(n) if v != instance.start]
    best_order: tuple[int, ...] | None = None
    best_cost = np.inf
    for perm in permutations(others):
        order = (instance.start, *perm)
        cost = path_cost(instance.weights, order)
        if cost < best_cost:
            best_cost = cost
            best_order = order
    assert best_order is not None
    return PathSolution(order=best_order, cost=float(best_cost))


def _two_opt_descent(weights: np.ndarray, order: list[int]) -> tuple[list[int], float]:
    """Improve a path by segment reversals until 2-opt locally optimal."""
    n = len(order)
    cost = path_cost(weights, order)
    improved = True
    while improved:
        improved = False
        for a in range(1, n - 1):
            for b in range(a + 1, n):
                before = weights[order[a - 1], order[a]]
                after = weights[order[a - 1], order[b]]
                if b + 1 < n:
                    before += weights[order[b], order[b + 1]]
                    after += weights[order[a], order[b + 1]]
                delta = after - before
                if delta < -1e-12:
                    order[a : b + 1] = reversed(order[a : b + 1])
                    cost += delta
                    improved = True
    return order, path_cost(weights, order)


def solve_2opt(instance: TspInstance, restarts: int = 16, rng=None) -> PathSolution:
    """Best 2-opt local optimum over seeded random restarts (start fixed)."""
    n = instance.size
    if n < 3:
        raise ValidationError(f"need at least 3 clusters, got {n}")
    if rng is None:
        rng = np.random.default_rng(0)
    others = np.array([v for v in range(n) if v != instance.start], dtype=np.int64)
    best_order: tuple[int, ...] | None = None
    best_cost = np.inf
    for _ in range(max(1, restarts)):
        perm = rng.permutation(others)
        order = [instance.start, *perm.tolist()]
        order, cost = _two_opt_descent(instance.weights, order)
        key = (cost, tuple(order))
        if best_order is None or key < (best_cost, best_order):
            best_cost = cost
            best_order = tuple(order)
    return PathSolution(order=best_order, cost=float(best_cost))


def solve(instance: TspInstance, solver: str = "auto", restarts: int = 16, rng=None) -> tuple[PathSolution, str]:
    """Dispatch to the configured solver; auto uses exact up to 12 clusters."""
    if solver == "auto":
        solver = "exact" if instance.size <= AUTO_EXACT_MAX else "two_opt"
    if solver == "exact":
        return solve_exact(instance), "exact"
    if solver == "two_opt":
        return solve_2opt(instance, restarts=restarts, rng=rng), "two_opt"
    raise ValidationError(f"unknown solver: {solver!r}")


@dataclass(frozen=True)
class FloorOrdering:
    """Permutation of cluster ids (1-based); position p means floor p."""

    cluster_order: tuple[int, ...]
    cost: float
    solver: str
    floor_of_cluster: dict[int, int]
    warnings: tuple[str, ...] = ()


def _ordering_from_path(path: PathSolution, solver: str, warnings: tuple[str, ...]) -> FloorOrdering:
    order_1based = tuple(c + 1 for c in path.order)
    floor_of_cluster = {c: pos + 1 for pos, c in enumerate(order_1based)}
    return FloorOrdering(
        cluster_order=order_1based,
        cost=path.cost,
        solver=solver,
        floor_of_cluster=floor_of_cluster,
        warnings=warnings,
    )


def _spillover_warnings(sim: np.ndarray) -> tuple[str, ...]:
    off_diag = sim[~np.eye(sim.shape[0], dtype=bool)]
    if np.all(off_diag == 0.0):
        return (
            "all pairwise cluster similarities are zero; ordering carries no "
            "spillover evidence and is arbitrary under the tie rule",
        )
    return ()


def index_bottom_anchor(
    sim: np.ndarray,
    anchor_cluster: int,
    solver: str = "auto",
    restarts: int = 16,
    rng=None,
) -> FloorOrdering:
    """Order clusters into floors with the anchor cluster as floor 1.

    ``anchor_cluster`` is 1-based, as are the returned cluster ids.
    """
    n = sim.shape[0]
    if not 1 <= anchor_cluster <= n:
        raise ValidationError(f"anchor cluster {anchor_cluster} out of range 1..{n}")
    instance = TspInstance.from_similarity(sim, start=anchor_cluster - 1)
    path, used = solve(instance, solver=solver, restarts=restarts, rng=rng)
    return _ordering_from_path(path, used, _spillover_warnings(sim))


def distance_to_cluster(point: np.ndarray, members: np.ndarray) -> float:
    """Mean Euclidean distance from a vector to a cluster's member vectors."""
    members = np.asarray(members, dtype=np.float64)
    if members.ndim != 2 or members.shape[0] == 0:
        raise ValidationError("cluster must be a non-empty 2-D array")
    return float(np.sqrt(((members - point) ** 2).sum(axis=1)).mean())


def index_arbitrary_anchor(
    sim: np.ndarray,
    anchor_embedding: np.ndarray,
    anchor_floor: int,
    cluster_members: list[np.ndarray],
    solver: str = "auto",
    restarts: int = 16,
    rng=None,
) -> FloorOrdering:
    """Order clusters when the single labeled scan is from any floor.

    Solves the fixed-start problem from every possible start cluster, keeps
    the ordering with the highest summed similarity, then orients it: the
    anchor can only sit at path position f or N+1-f, and the candidate
    cluster whose members are closer to the anchor embedding decides which
    end is floor 1.  An anchor on the middle floor of an odd building leaves
    the two candidates equal, which is unresolvable by construction.
    """
    n = sim.shape[0]
    if not 1 <= anchor_floor <= n:
        raise ValidationError(f"anchor floor {anchor_floor} out of range 1..{n}")
    if len(cluster_members) != n:
        raise ValidationError("need member embeddings for every cluster")
    if n % 2 == 1 and anchor_floor == (n + 1) // 2:
        raise MiddleFloorAnchorError(
            f"anchor floor {anchor_floor} is the middle floor of {n}; "
            f"the ordering cannot be oriented"
        )

    best: PathSolution | None = None
    used = ""
    for start in range(n):
        instance = TspInstance.from_similarity(sim, start=start)
        path, used = solve(instance, solver=solver, restarts=restarts, rng=rng)
        if best is None or (path.cost, path.order) < (best.cost, best.order):
            best = path
    assert best is not None

    pos_a = anchor_floor  # 1-based position along the chosen path
    pos_b = n + 1 - anchor_floor
    cand_a = best.order[pos_a - 1]
    cand_b = best.order[pos_b - 1]
    anchor_embedding = np.asarray(anchor_embedding, dtype=np.float64)
    d_a = distance_to_cluster(anchor_embedding, cluster_members[cand_a])
    d_b = distance_to_cluster(anchor_embedding, cluster_members[cand_b])
    if abs(d_a - d_b) < 1e-12:
        raise AmbiguousOrientationError(
            f"anchor is equidistant from both candidate clusters "
            f"({cand_a + 1} and {cand_b + 1}): {d_a!r} vs {d_b!r}"
        )
    order = best.order if d_a < d_b else tuple(reversed(best.order))
    path = PathSolution(order=order, cost=path_cost_oriented(sim, order))
    return _ordering_from_path(path, used, _spillover_warnings(sim))


def path_cost_oriented(sim: np.ndarray, order) -> float:
    """Path cost of an order measured as sum of (1 - similarity) edges."""
    cost = 0.0
    for a, b in zip(order, order[1:]):
        cost += 1.0 - sim[a, b]
    return cost


def assign_labels(
    ordering: FloorOrdering,
    cluster_of_sample: dict[int, int],
    anchor_index: int | None = None,
    anchor_floor: int | None = None,
) -> dict[int, int]:
    """Per-sample floor labels: each sample gets its cluster's floor.

    ``cluster_of_sample`` maps record index -> cluster id (1-based); a
    held-out anchor (absent from the clustering) gets its declared floor.
    """
    labels = {
        idx: ordering.floor_of_cluster[cluster]
        for idx, cluster in cluster_of_sample.items()
    }
    if anchor_index is not None:
        if anchor_floor is None:
            raise ValidationError("held-out anchor needs a declared floor")
        labels[anchor_index] = anchor_floor
    return labels
