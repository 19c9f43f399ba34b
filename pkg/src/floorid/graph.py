"""Weighted bipartite graph linking MAC addresses to the scans that heard them.

Nodes carry dense integer ids: MACs first (0 .. n_macs-1, in dataset
first-seen order), then samples (n_macs .. n_macs+n_samples-1, in record
order).  An edge (mac, sample) exists iff the MAC appears in the record's
readings; its weight is rss + offset, strictly positive.

Adjacency is stored CSR-style (flat neighbor/weight arrays plus offsets)
with a global running cumsum of weights, so weight-proportional neighbor
draws vectorize across many nodes at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ingest import RSS_OFFSET_DBM, Dataset


@dataclass(frozen=True)
class BipartiteGraph:
    n_macs: int
    n_samples: int
    offset_dbm: float
    indptr: np.ndarray = field(repr=False)  # (num_nodes + 1,)
    adj: np.ndarray = field(repr=False)  # (2E,) neighbor ids grouped by node
    adj_w: np.ndarray = field(repr=False)  # (2E,) edge weights
    cum0: np.ndarray = field(repr=False)  # (2E + 1,) running cumsum, cum0[0] = 0

    @property
    def num_nodes(self) -> int:
        return self.n_macs + self.n_samples

    def is_mac(self, node: int) -> bool:
        return node < self.n_macs

    def sample_node(self, sample_idx: int) -> int:
        """Global node id of the sample with the given record index."""
        return self.n_macs + sample_idx

    def _check(self, node: int) -> None:
        if not 0 <= node < self.num_nodes:
            raise ValidationError(f"node id {node} out of range [0, {self.num_nodes})")

    def neighbors(self, node: int) -> np.ndarray:
        self._check(node)
        return self.adj[self.indptr[node] : self.indptr[node + 1]]

    def weights(self, node: int) -> np.ndarray:
        self._check(node)
        return self.adj_w[self.indptr[node] : self.indptr[node + 1]]

    def degree(self, node: int) -> int:
        self._check(node)
        return int(self.indptr[node + 1] - self.indptr[node])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_weight(self, u: int, v: int) -> float | None:
        """Weight of edge (u, v), or None when the edge is absent."""
        self._check(u)
        self._check(v)
        nbrs = self.neighbors(u)
        hits = np.nonzero(nbrs == v)[0]
        if len(hits) == 0:
            return None
        return float(self.weights(u)[hits[0]])

    def num_edges(self) -> int:
        return int(self.indptr[self.n_macs])

    @classmethod
    def from_adjacency(
        cls,
        n_macs: int,
        n_samples: int,
        adj_lists: list[list[tuple[int, float]]],
        offset_dbm: float = RSS_OFFSET_DBM,
    ) -> "BipartiteGraph":
        num_nodes = n_macs + n_samples
        if len(adj_lists) != num_nodes:
            raise ValidationError("adjacency list count does not match node count")
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        for node, lst in enumerate(adj_lists):
            if not lst:
                raise ValidationError(f"node {node} is isolated")
            indptr[node + 1] = indptr[node] + len(lst)
        adj = np.empty(indptr[-1], dtype=np.int64)
        adj_w = np.empty(indptr[-1], dtype=np.float64)
        for node, lst in enumerate(adj_lists):
            lo = indptr[node]
            for t, (nb, w) in enumerate(lst):
                if w <= 0:
                    raise ValidationError(f"non-positive edge weight at node {node}")
                adj[lo + t] = nb
                adj_w[lo + t] = w
        cum0 = np.concatenate([[0.0], np.cumsum(adj_w)])
        return cls(
            n_macs=n_macs,
            n_samples=n_samples,
            offset_dbm=offset_dbm,
            indptr=indptr,
            adj=adj,
            adj_w=adj_w,
            cum0=cum0,
        )

    @classmethod
    def from_edges(
        cls,
        n_macs: int,
        n_samples: int,
        edges: list[tuple[int, int, float]],
        offset_dbm: float = RSS_OFFSET_DBM,
    ) -> "BipartiteGraph":
        """Build from (mac_idx, sample_idx, weight) triples; mainly for tests
        and for reloading edge-list dumps."""
        adj_lists: list[list[tuple[int, float]]] = [[] for _ in range(n_macs + n_samples)]
        for mac_idx, sample_idx, w in edges:
            if not 0 <= mac_idx < n_macs:
                raise ValidationError(f"mac index {mac_idx} out of range")
            if not 0 <= sample_idx < n_samples:
                raise ValidationError(f"sample index {sample_idx} out of range")
            v = n_macs + sample_idx
            adj_lists[mac_idx].append((v, float(w)))
            adj_lists[v].append((mac_idx, float(w)))
        return cls.from_adjacency(n_macs, n_samples, adj_lists, offset_dbm)


def build_graph(dataset: Dataset, offset_dbm: float = RSS_OFFSET_DBM) -> BipartiteGraph:
    """Construct the weighted bipartite graph for a dataset.

    The offset must exceed the magnitude of every RSS reading so that all
    edge weights rss + offset are strictly positive.
    """
    mac_index = {mac: i for i, mac in enumerate(dataset.mac_universe)}
    n_macs = len(mac_index)
    n_samples = len(dataset.records)
    adj_lists: list[list[tuple[int, float]]] = [[] for _ in range(n_macs + n_samples)]
    for j, rec in enumerate(dataset.records):
        v = n_macs + j
        for mac, rss in rec.readings.items():
            w = rss + offset_dbm
            if w <= 0:
                raise ValidationError(
                    f"record {rec.id!r}: rss {rss} with offset {offset_dbm} "
                    f"gives non-positive edge weight"
                )
            u = mac_index[mac]
            adj_lists[u].append((v, w))
            adj_lists[v].append((u, w))
    return BipartiteGraph.from_adjacency(n_macs, n_samples, adj_lists, offset_dbm)


def write_edge_list(graph: BipartiteGraph, path: str | Path) -> None:
    """Dump edges as 'mac_idx sample_idx weight' lines (debugging aid)."""
    with Path(path).open("w") as fh:
        for u in range(graph.n_macs):
            for v, w in zip(graph.neighbors(u), graph.weights(u)):
                fh.write(f"{u} {v - graph.n_macs} {float(w)!r}\n")
