"""Command-line interface.

Subcommands run the whole pipeline or a single stage from/to files:

    floorid run      --data scans.jsonl --floors 5 --out results/
    floorid generate --floors 5 --seed 7 --out building.jsonl
    floorid embed    --data scans.jsonl --floors 5 --out emb.txt
    floorid cluster  --data scans.jsonl --floors 5 --embeddings emb.txt --out assign.txt
    floorid index    --data scans.jsonl --floors 5 --assignments assign.txt --out labels.txt
    floorid eval     --data scans.jsonl --floors 5 --labels labels.txt

Exit codes: 0 success, 2 validation error, 3 anchor on the middle floor of
an odd building (arbitrary mode), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import clustering as clustering_mod
from . import gnn, indexing, pipeline
from .errors import (
    FloorIdError,
    MiddleFloorAnchorError,
    NumericError,
    ValidationError,
)
from .graph import build_graph, write_edge_list
from .ingest import load_dataset, summarize, write_jsonl
from .synth import Atrium, BuildingSpec, generate, generate_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MIDDLE_FLOOR = 3
EXIT_NUMERIC = 4

_GNN_FLAGS = {
    "dim": int,
    "hops": int,
    "walk_length": int,
    "walks_per_node": int,
    "negatives": int,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "aggregator": str,
    "walk_transition": str,
    "optimizer": str,
}


def _add_gnn_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("embedding")
    for name, typ in _GNN_FLAGS.items():
        group.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    group.add_argument(
        "--fanout", type=str, default=None, help="comma-separated draws per hop, e.g. 10,10"
    )


def _gnn_config_from_args(args: argparse.Namespace, base: gnn.GnnConfig) -> gnn.GnnConfig:
    updates = {}
    for name in _GNN_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    if getattr(args, "fanout", None) is not None:
        updates["fanout"] = tuple(int(v) for v in args.fanout.split(","))
    return replace(base, **updates) if updates else base


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=str, default=None, help="JSON Lines scan file")
    parser.add_argument("--floors", type=int, default=None, help="number of floors N")
    parser.add_argument("--mode", choices=["bottom", "arbitrary"], default=None)
    parser.add_argument("--clustering", choices=["hierarchical", "kmeans"], default=None)
    parser.add_argument("--similarity", choices=["adapted", "plain"], default=None)
    parser.add_argument("--solver", choices=["auto", "exact", "two_opt"], default=None)
    parser.add_argument("--restarts", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--min-floor-samples", type=int, default=None)
    parser.add_argument("--graph-offset", type=float, default=None)
    parser.add_argument("--dump-graph", action="store_true", default=None)
    parser.add_argument("--threads", type=int, default=None, help="reserved; stages run serially")
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    _add_gnn_flags(parser)


def _pipeline_config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    file_obj: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"no such config file: {path}")
        with path.open() as fh:
            file_obj = json.load(fh)
    base = pipeline.config_from_dict({"data": "", "floors": 3, **file_obj})

    updates = {}
    for f in fields(pipeline.PipelineConfig):
        if f.name == "gnn":
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            updates[f.name] = value
    config = replace(base, **updates) if updates else base
    config = replace(config, gnn=_gnn_config_from_args(args, config.gnn))
    if not config.data:
        raise ValidationError("--data is required (flag or config file)")
    if config.floors is None:
        raise ValidationError("--floors is required (flag or config file)")
    return config


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_run(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    report = pipeline.run_pipeline(config)
    if config.out:
        print(f"report written to {Path(config.out) / 'report.json'}")
    else:
        json.dump(report, sys.stdout, indent=2)
        print()
    if report["metrics"]:
        m = report["metrics"]
        print(
            f"ari={m['ari']:.4f} nmi={m['nmi']:.4f} "
            f"edit_distance={m['edit_distance']}"
        )
    return EXIT_OK


def _building_spec(args: argparse.Namespace) -> BuildingSpec:
    spec = BuildingSpec()
    updates = {}
    for f in fields(BuildingSpec):
        if f.name == "atrium":
            continue
        value = getattr(args, f.name, None)
        if value is not None:
            updates[f.name] = value
    if getattr(args, "atrium", None):
        x, y, r = (float(v) for v in args.atrium.split(","))
        updates["atrium"] = Atrium(x=x, y=y, radius=r)
    return replace(spec, **updates) if updates else spec


def _cmd_generate(args: argparse.Namespace) -> int:
    if args.suite:
        if not args.out:
            raise ValidationError("--out directory is required for --suite")
        floors_list = [int(v) for v in (args.floors_list or "5").split(",")]
        seeds = [int(v) for v in (args.seeds or "0").split(",")]
        base = _building_spec(args)
        specs = [replace(base, floors=f) for f in floors_list]
        manifest = generate_suite(specs, seeds, args.out)
        print(f"wrote {len(manifest)} datasets to {args.out}")
        return EXIT_OK
    if not args.out:
        raise ValidationError("--out file is required")
    dataset = generate(_building_spec(args))
    write_jsonl(dataset, args.out)
    summary = summarize(dataset)
    print(
        f"wrote {summary.record_count} records, {summary.mac_count} MACs "
        f"to {args.out}"
    )
    return EXIT_OK


def _cmd_embed(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    dataset = load_dataset(config.data, config.floors, config.min_floor_samples)
    graph = build_graph(dataset, config.graph_offset)
    result = gnn.train(graph, replace(config.gnn, seed=config.seed))
    out = Path(args.embeddings_out)
    gnn.save_embeddings(result.table, out)
    gnn.write_training_log(result.epoch_losses, out.with_suffix(".log"))
    if config.dump_graph:
        write_edge_list(graph, out.with_suffix(".graph.txt"))
    print(f"wrote embeddings for {graph.num_nodes} nodes to {out}")
    return EXIT_OK


def _cmd_cluster(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    dataset = load_dataset(config.data, config.floors, config.min_floor_samples)
    table = gnn.load_embeddings(args.embeddings)
    if table.vectors.shape[0] != len(dataset.mac_universe) + len(dataset.records):
        raise ValidationError("embedding table does not match the dataset")
    holdout = dataset.anchor_index if config.mode == "arbitrary" else None
    clustering = pipeline.cluster_embeddings(table.sample_vectors, config, holdout)
    pipeline.write_assignments(dataset, clustering, args.assignments_out)
    print(f"wrote cluster assignments to {args.assignments_out}")
    return EXIT_OK


def _cmd_index(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    dataset = load_dataset(config.data, config.floors, config.min_floor_samples)
    pipeline.check_mode(dataset, config.mode)
    clustering = pipeline.read_assignments(dataset, config.floors, args.assignments)
    if config.mode == "arbitrary":
        if not args.embeddings:
            raise ValidationError("--embeddings is required in arbitrary mode")
        table = gnn.load_embeddings(args.embeddings)
        sample_vectors = table.sample_vectors
    else:
        sample_vectors = np.zeros((len(dataset.records), 1))
    ordering, sim = pipeline.order_clusters(dataset, clustering, sample_vectors, config)
    labels = pipeline.label_samples(dataset, clustering, ordering, config.mode)
    pipeline.write_labels(dataset, labels, args.labels_out)
    report = {
        "cluster_order": list(ordering.cluster_order),
        "path_cost": ordering.cost,
        "solver": ordering.solver,
        "similarity_matrix": sim.tolist(),
        "warnings": list(ordering.warnings),
        "floor_of_cluster": {str(k): v for k, v in ordering.floor_of_cluster.items()},
    }
    if args.report:
        with Path(args.report).open("w") as fh:
            json.dump(report, fh, indent=2)
    print(f"wrote labels to {args.labels_out}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    dataset = load_dataset(config.data, config.floors, config.min_floor_samples)
    labels = pipeline.read_labels(dataset, args.labels)
    metrics_report = pipeline.score_labels(dataset, labels)
    if metrics_report is None:
        raise ValidationError("evaluation requires ground-truth floors on every record")
    out = json.dumps(metrics_report, indent=2)
    if args.metrics_out:
        Path(args.metrics_out).write_text(out + "\n")
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floorid",
        description="Label crowdsourced RF scans with floor numbers from a single anchor scan.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the whole pipeline")
    _add_pipeline_flags(p_run)
    p_run.set_defaults(handler=_cmd_run)

    p_gen = sub.add_parser("generate", help="generate a synthetic building dataset")
    for f in fields(BuildingSpec):
        if f.name == "atrium":
            continue
        typ = int if f.type in ("int",) else float
        if f.name in ("floors", "aps_per_floor", "samples_per_floor", "anchor_floor", "seed"):
            typ = int
        p_gen.add_argument(f"--{f.name.replace('_', '-')}", type=typ, default=None)
    p_gen.add_argument("--atrium", type=str, default=None, help="x,y,radius disc with no floor loss")
    p_gen.add_argument("--out", type=str, default=None, help="output file (or directory with --suite)")
    p_gen.add_argument("--suite", action="store_true", help="generate a dataset suite with a manifest")
    p_gen.add_argument("--floors-list", type=str, default=None, help="comma-separated floor counts")
    p_gen.add_argument("--seeds", type=str, default=None, help="comma-separated seeds")
    p_gen.set_defaults(handler=_cmd_generate)

    p_embed = sub.add_parser("embed", help="train embeddings and write the table")
    _add_pipeline_flags(p_embed)
    p_embed.add_argument("--embeddings-out", type=str, required=True)
    p_embed.set_defaults(handler=_cmd_embed)

    p_cluster = sub.add_parser("cluster", help="cluster an embedding table")
    _add_pipeline_flags(p_cluster)
    p_cluster.add_argument("--embeddings", type=str, required=True)
    p_cluster.add_argument("--assignments-out", type=str, required=True)
    p_cluster.set_defaults(handler=_cmd_cluster)

    p_index = sub.add_parser("index", help="order clusters into floors and label samples")
    _add_pipeline_flags(p_index)
    p_index.add_argument("--assignments", type=str, required=True)
    p_index.add_argument("--embeddings", type=str, default=None)
    p_index.add_argument("--labels-out", type=str, required=True)
    p_index.add_argument("--report", type=str, default=None)
    p_index.set_defaults(handler=_cmd_index)

    p_eval = sub.add_parser("eval", help="score predicted labels against ground truth")
    _add_pipeline_flags(p_eval)
    p_eval.add_argument("--labels", type=str, required=True)
    p_eval.add_argument("--metrics-out", type=str, default=None)
    p_eval.set_defaults(handler=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except MiddleFloorAnchorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MIDDLE_FLOOR
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloorIdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
