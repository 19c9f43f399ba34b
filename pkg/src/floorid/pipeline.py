"""End-to-end orchestration: scans in, per-sample floor labels out.

Stages: load -> graph -> train embeddings -> cluster -> similarity ->
order clusters -> label samples -> (optionally) score against ground truth.
Each stage draws randomness from its own stream derived from the run seed,
so running stages separately from files reproduces the monolithic run.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import clustering as clustering_mod
from . import gnn, graph as graph_mod, indexing, metrics as metrics_mod
from .errors import DegenerateMappingError, ValidationError
from .ingest import Dataset, load_dataset

# Per-stage RNG stream tags (mixed with the run seed).
STREAM_GNN = 0x6E  # must match gnn.train
STREAM_KMEANS = 0x4B
STREAM_SOLVER = 0x50


def stage_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


@dataclass(frozen=True)
class PipelineConfig:
    data: str
    floors: int
    mode: str = "bottom"  # or "arbitrary"
    clustering: str = "hierarchical"  # or "kmeans"
    similarity: str = "adapted"  # or "plain"
    solver: str = "auto"  # exact | two_opt | auto
    restarts: int = 16
    seed: int = 0
    out: str | None = None
    min_floor_samples: int | None = None
    graph_offset: float = 120.0
    dump_graph: bool = False
    threads: int = 1  # reserved; all stages run serially
    gnn: gnn.GnnConfig = field(default_factory=gnn.GnnConfig)

    def validate(self) -> None:
        if self.mode not in ("bottom", "arbitrary"):
            raise ValidationError(f"unknown mode: {self.mode!r}")
        if self.clustering not in ("hierarchical", "kmeans"):
            raise ValidationError(f"unknown clustering method: {self.clustering!r}")
        if self.similarity not in ("adapted", "plain"):
            raise ValidationError(f"unknown similarity method: {self.similarity!r}")
        if self.solver not in ("auto", "exact", "two_opt"):
            raise ValidationError(f"unknown solver: {self.solver!r}")
        if self.floors < 3:
            raise ValidationError("floor count must be at least 3")

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(obj: dict) -> PipelineConfig:
    obj = dict(obj)
    gnn_obj = obj.pop("gnn", {}) or {}
    if "fanout" in gnn_obj:
        gnn_obj["fanout"] = tuple(gnn_obj["fanout"])
    try:
        gnn_cfg = gnn.GnnConfig(**gnn_obj)
        return PipelineConfig(gnn=gnn_cfg, **obj)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from None


def check_mode(dataset: Dataset, mode: str) -> None:
    anchor = dataset.anchor
    if mode == "bottom" and anchor.floor != 1:
        raise ValidationError(
            f"bottom mode requires the anchor on floor 1, got {anchor.floor}; "
            f"use --mode arbitrary for other anchor floors"
        )


def cluster_embeddings(
    sample_vectors: np.ndarray, config: PipelineConfig, holdout: int | None
) -> clustering_mod.Clustering:
    if config.clustering == "hierarchical":
        return clustering_mod.hierarchical_cluster(
            sample_vectors, config.floors, holdout=holdout
        )
    return clustering_mod.kmeans_cluster(
        sample_vectors,
        config.floors,
        rng=stage_rng(config.seed, STREAM_KMEANS),
        holdout=holdout,
    )


def order_clusters(
    dataset: Dataset,
    clustering: clustering_mod.Clustering,
    sample_vectors: np.ndarray,
    config: PipelineConfig,
) -> tuple[indexing.FloorOrdering, np.ndarray]:
    freq = clustering_mod.mac_frequency_profile(clustering, dataset)
    sim = indexing.build_similarity(freq, method=config.similarity)
    rng = stage_rng(config.seed, STREAM_SOLVER)
    anchor_idx = dataset.anchor_index
    if config.mode == "bottom":
        anchor_cluster = int(clustering.labels[anchor_idx])
        ordering = indexing.index_bottom_anchor(
            sim, anchor_cluster, solver=config.solver, restarts=config.restarts, rng=rng
        )
    else:
        members = [
            sample_vectors[clustering.members(c)]
            for c in range(1, clustering.n_clusters + 1)
        ]
        ordering = indexing.index_arbitrary_anchor(
            sim,
            sample_vectors[anchor_idx],
            int(dataset.anchor.floor),
            members,
            solver=config.solver,
            restarts=config.restarts,
            rng=rng,
        )
    return ordering, sim


def label_samples(
    dataset: Dataset,
    clustering: clustering_mod.Clustering,
    ordering: indexing.FloorOrdering,
    mode: str,
) -> dict[int, int]:
    if mode == "arbitrary":
        return indexing.assign_labels(
            ordering,
            clustering.cluster_of_sample(),
            anchor_index=dataset.anchor_index,
            anchor_floor=int(dataset.anchor.floor),
        )
    return indexing.assign_labels(ordering, clustering.cluster_of_sample())


def score_labels(dataset: Dataset, labels: dict[int, int]) -> dict | None:
    """ARI/NMI/edit-distance against ground truth, over labeled records."""
    gt_indices = dataset.labeled_indices
    if len(gt_indices) < len(dataset.records):
        # Clustering metrics over a partial subset would not mean much;
        # report metrics only for fully labeled datasets.
        return None
    predicted = [labels[i] for i in gt_indices]
    truth = [dataset.records[i].floor for i in gt_indices]
    report: dict = {
        "ari": metrics_mod.ari(predicted, truth),
        "nmi": metrics_mod.nmi(predicted, truth),
    }
    try:
        seq_x, seq_y = metrics_mod.ordering_to_sequence(
            predicted, truth, dataset.floor_count
        )
        report["edit_distance"] = metrics_mod.edit_distance(seq_x, seq_y)
        report["predicted_sequence"] = seq_x
    except DegenerateMappingError as exc:
        report["edit_distance"] = None
        report["warning"] = str(exc)
    table = metrics_mod.contingency(predicted, truth)
    report["contingency_table"] = table.counts.tolist()
    return report


def write_labels(dataset: Dataset, labels: dict[int, int], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for i, rec in enumerate(dataset.records):
            fh.write(f"{rec.id} {labels[i]}\n")


def read_labels(dataset: Dataset, path: str | Path) -> dict[int, int]:
    labels: dict[int, int] = {}
    with Path(path).open() as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if len(lines) != len(dataset.records):
        raise ValidationError(
            f"{path}: {len(lines)} label lines for {len(dataset.records)} records"
        )
    for i, (rec, parts) in enumerate(zip(dataset.records, lines)):
        if len(parts) != 2 or parts[0] != rec.id:
            raise ValidationError(f"{path}: line {i + 1} does not match record order")
        labels[i] = int(parts[1])
    return labels


def write_assignments(
    dataset: Dataset, clustering: clustering_mod.Clustering, path: str | Path
) -> None:
    """Lines of 'sample_id cluster_id'; a held-out sample gets cluster 0."""
    with Path(path).open("w") as fh:
        for i, rec in enumerate(dataset.records):
            fh.write(f"{rec.id} {int(clustering.labels[i])}\n")


def read_assignments(
    dataset: Dataset, n_clusters: int, path: str | Path
) -> clustering_mod.Clustering:
    with Path(path).open() as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if len(lines) != len(dataset.records):
        raise ValidationError(
            f"{path}: {len(lines)} assignment lines for {len(dataset.records)} records"
        )
    labels = np.zeros(len(lines), dtype=np.int64)
    holdout = None
    for i, (rec, parts) in enumerate(zip(dataset.records, lines)):
        if len(parts) != 2 or parts[0] != rec.id:
            raise ValidationError(f"{path}: line {i + 1} does not match record order")
        labels[i] = int(parts[1])
        if labels[i] == 0:
            holdout = i
    if set(np.unique(labels[labels > 0]).tolist()) != set(range(1, n_clusters + 1)):
        raise ValidationError(f"{path}: cluster ids must cover 1..{n_clusters}")
    return clustering_mod.Clustering(labels=labels, n_clusters=n_clusters, holdout=holdout)


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage and return the report document."""
    config.validate()
    out_dir = Path(config.out) if config.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    stages: list[dict] = []
    artifacts: dict[str, str] = {}

    def timed(name: str, fn):
        start = time.perf_counter()
        result = fn()
        stages.append({"name": name, "seconds": time.perf_counter() - start})
        return result

    dataset = timed(
        "ingest",
        lambda: load_dataset(config.data, config.floors, config.min_floor_samples),
    )
    check_mode(dataset, config.mode)
    graph = timed("graph", lambda: graph_mod.build_graph(dataset, config.graph_offset))

    gnn_cfg = replace(config.gnn, seed=config.seed)
    result = timed("train", lambda: gnn.train(graph, gnn_cfg))
    sample_vectors = result.table.sample_vectors

    holdout = dataset.anchor_index if config.mode == "arbitrary" else None
    clustering = timed(
        "cluster", lambda: cluster_embeddings(sample_vectors, config, holdout)
    )
    ordering, sim = timed(
        "index", lambda: order_clusters(dataset, clustering, sample_vectors, config)
    )
    labels = label_samples(dataset, clustering, ordering, config.mode)
    metrics_report = timed("eval", lambda: score_labels(dataset, labels))

    if out_dir:
        write_labels(dataset, labels, out_dir / "labels.txt")
        artifacts["labels"] = str(out_dir / "labels.txt")
        gnn.save_embeddings(result.table, out_dir / "embeddings.txt")
        artifacts["embeddings"] = str(out_dir / "embeddings.txt")
        gnn.write_training_log(result.epoch_losses, out_dir / "training.log")
        artifacts["training_log"] = str(out_dir / "training.log")
        write_assignments(dataset, clustering, out_dir / "assignments.txt")
        artifacts["assignments"] = str(out_dir / "assignments.txt")
        if config.dump_graph:
            graph_mod.write_edge_list(graph, out_dir / "graph.txt")
            artifacts["graph"] = str(out_dir / "graph.txt")

    report = {
        "config": config.to_dict(),
        "seed": config.seed,
        "records": len(dataset.records),
        "macs": len(dataset.mac_universe),
        "cluster_order": list(ordering.cluster_order),
        "path_cost": ordering.cost,
        "solver": ordering.solver,
        "similarity_matrix": sim.tolist(),
        "warnings": list(ordering.warnings),
        "floor_of_cluster": {str(k): v for k, v in ordering.floor_of_cluster.items()},
        "labels": {dataset.records[i].id: floor for i, floor in sorted(labels.items())},
        "epoch_losses": result.epoch_losses,
        "metrics": metrics_report,
        "stages": stages,
        "artifacts": artifacts,
    }
    if out_dir:
        with (out_dir / "report.json").open("w") as fh:
            json.dump(report, fh, indent=2)
        artifacts["report"] = str(out_dir / "report.json")
    return report
