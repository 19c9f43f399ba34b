import json

import numpy as np
import pytest

from floorid import cli, gnn, pipeline
from floorid.ingest import load_dataset, write_jsonl
from floorid.synth import BuildingSpec, generate

FAST_GNN = {
    "dim": 16,
    "epochs": 3,
    "walks_per_node": 5,
    "batch_size": 1024,
}

# Sharp floors (high attenuation, low noise) keep the smoke pipeline quick.
FAST_BUILDING = dict(
    floors=5,
    aps_per_floor=8,
    samples_per_floor=30,
    floor_attenuation=30.0,
    noise_sigma=2.0,
)


@pytest.fixture(scope="module")
def building(tmp_path_factory):
    root = tmp_path_factory.mktemp("building")
    path = root / "scans.jsonl"
    spec = BuildingSpec(seed=11, **FAST_BUILDING)
    write_jsonl(generate(spec), path)
    return path


@pytest.fixture(scope="module")
def arbitrary_building(tmp_path_factory):
    root = tmp_path_factory.mktemp("building_arb")
    path = root / "scans.jsonl"
    spec = BuildingSpec(seed=12, anchor_floor=2, **FAST_BUILDING)
    write_jsonl(generate(spec), path)
    return path


@pytest.fixture(scope="module")
def middle_building(tmp_path_factory):
    root = tmp_path_factory.mktemp("building_mid")
    path = root / "scans.jsonl"
    spec = BuildingSpec(seed=13, anchor_floor=3, **FAST_BUILDING)
    write_jsonl(generate(spec), path)
    return path


def fast_config(data, out=None, **kw):
    return pipeline.config_from_dict(
        {"data": str(data), "floors": 5, "seed": 5, "out": out and str(out), "gnn": dict(FAST_GNN), **kw}
    )


class TestRunPipeline:
    def test_report_fields_populated(self, building, tmp_path):
        report = pipeline.run_pipeline(fast_config(building, out=tmp_path / "run"))
        assert report["metrics"] is not None
        for key in ("ari", "nmi", "edit_distance"):
            assert report["metrics"][key] is not None
        assert sorted(report["cluster_order"]) == [1, 2, 3, 4, 5]
        assert report["solver"] == "exact"
        assert len(report["stages"]) == 6
        assert (tmp_path / "run" / "report.json").exists()
        assert (tmp_path / "run" / "labels.txt").exists()
        echo = report["config"]
        assert echo["seed"] == 5
        assert echo["gnn"]["epochs"] == FAST_GNN["epochs"]

    def test_deterministic_labels(self, building, tmp_path):
        a = pipeline.run_pipeline(fast_config(building, out=tmp_path / "a"))
        b = pipeline.run_pipeline(fast_config(building, out=tmp_path / "b"))
        assert (tmp_path / "a" / "labels.txt").read_bytes() == (
            tmp_path / "b" / "labels.txt"
        ).read_bytes()
        assert a["cluster_order"] == b["cluster_order"]

    def test_bottom_mode_requires_floor1_anchor(self, arbitrary_building):
        with pytest.raises(Exception, match="floor 1"):
            pipeline.run_pipeline(fast_config(arbitrary_building, mode="bottom"))

    def test_arbitrary_mode_runs(self, arbitrary_building, tmp_path):
        report = pipeline.run_pipeline(
            fast_config(arbitrary_building, out=tmp_path / "arb", mode="arbitrary")
        )
        labels = report["labels"]
        ds = load_dataset(arbitrary_building, 5)
        assert labels[ds.anchor.id] == 2  # held-out anchor keeps its floor

    def test_kmeans_and_plain_variants(self, building):
        report = pipeline.run_pipeline(
            fast_config(building, clustering="kmeans", similarity="plain")
        )
        assert report["metrics"] is not None


class TestCliStages:
    def test_stage_composition_equals_run(self, building, tmp_path):
        out = tmp_path / "mono"
        report = pipeline.run_pipeline(fast_config(building, out=out))

        gnn_flags = [
            "--dim", str(FAST_GNN["dim"]),
            "--epochs", str(FAST_GNN["epochs"]),
            "--walks-per-node", str(FAST_GNN["walks_per_node"]),
            "--batch-size", str(FAST_GNN["batch_size"]),
        ]
        common = ["--data", str(building), "--floors", "5", "--seed", "5"]
        emb = tmp_path / "emb.txt"
        assign = tmp_path / "assign.txt"
        labels = tmp_path / "labels.txt"
        idx_report = tmp_path / "index.json"

        assert cli.main(["embed", *common, *gnn_flags, "--embeddings-out", str(emb)]) == 0
        assert cli.main(["cluster", *common, "--embeddings", str(emb), "--assignments-out", str(assign)]) == 0
        assert (
            cli.main(
                [
                    "index", *common,
                    "--assignments", str(assign),
                    "--labels-out", str(labels),
                    "--report", str(idx_report),
                ]
            )
            == 0
        )

        assert emb.read_bytes() == (out / "embeddings.txt").read_bytes()
        assert assign.read_bytes() == (out / "assignments.txt").read_bytes()
        assert labels.read_bytes() == (out / "labels.txt").read_bytes()
        staged = json.loads(idx_report.read_text())
        assert staged["cluster_order"] == report["cluster_order"]

    def test_eval_perfect_labels(self, building, tmp_path):
        ds = load_dataset(building, 5)
        labels = tmp_path / "perfect.txt"
        with labels.open("w") as fh:
            for rec in ds.records:
                fh.write(f"{rec.id} {rec.floor}\n")
        metrics_out = tmp_path / "metrics.json"
        code = cli.main(
            [
                "eval",
                "--data", str(building),
                "--floors", "5",
                "--labels", str(labels),
                "--metrics-out", str(metrics_out),
            ]
        )
        assert code == 0
        metrics = json.loads(metrics_out.read_text())
        assert metrics["ari"] == 1.0
        assert metrics["nmi"] == 1.0
        assert metrics["edit_distance"] == 1.0

    def test_generate_then_load(self, tmp_path):
        out = tmp_path / "g.jsonl"
        code = cli.main(
            [
                "generate",
                "--floors", "4",
                "--aps-per-floor", "6",
                "--samples-per-floor", "12",
                "--seed", "3",
                "--out", str(out),
            ]
        )
        assert code == 0
        ds = load_dataset(out, 4)
        assert len(ds.records) == 48

    def test_generate_suite(self, tmp_path):
        out = tmp_path / "suite"
        code = cli.main(
            [
                "generate", "--suite",
                "--aps-per-floor", "6",
                "--samples-per-floor", "12",
                "--floors-list", "3,4",
                "--seeds", "0,1",
                "--out", str(out),
            ]
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest) == 4


class TestCliExitCodes:
    def test_middle_floor_is_exit_3(self, middle_building, tmp_path):
        code = cli.main(
            [
                "run",
                "--data", str(middle_building),
                "--floors", "5",
                "--mode", "arbitrary",
                "--seed", "5",
                "--epochs", "2",
                "--walks-per-node", "5",
                "--dim", "16",
                "--out", str(tmp_path / "mid"),
            ]
        )
        assert code == 3

    def test_validation_error_is_exit_2(self, tmp_path):
        code = cli.main(
            ["run", "--data", str(tmp_path / "missing.jsonl"), "--floors", "5"]
        )
        assert code == 2

    def test_bottom_mode_wrong_anchor_is_exit_2(self, arbitrary_building):
        code = cli.main(
            ["run", "--data", str(arbitrary_building), "--floors", "5", "--epochs", "1"]
        )
        assert code == 2


class TestConfigPrecedence:
    def test_flags_override_file(self, building, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(
            json.dumps(
                {
                    "data": str(building),
                    "floors": 5,
                    "seed": 7,
                    "gnn": {"epochs": 1, "dim": 8, "walks_per_node": 4},
                }
            )
        )
        out = tmp_path / "o"
        code = cli.main(
            ["run", "--config", str(cfg_file), "--seed", "9", "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["seed"] == 9  # flag wins
        assert report["config"]["gnn"]["epochs"] == 1  # file value kept

    def test_config_requires_data(self):
        assert cli.main(["run", "--floors", "5"]) == 2


class TestLabelsIO:
    def test_round_trip(self, building, tmp_path):
        ds = load_dataset(building, 5)
        labels = {i: 1 + (i % 5) for i in range(len(ds.records))}
        path = tmp_path / "labels.txt"
        pipeline.write_labels(ds, labels, path)
        assert pipeline.read_labels(ds, path) == labels

    def test_assignments_round_trip(self, building, tmp_path):
        ds = load_dataset(building, 5)
        rng = np.random.default_rng(0)
        raw = rng.integers(1, 6, size=len(ds.records))
        raw[7] = 0  # held-out marker
        for c in range(1, 6):
            raw[c] = c  # ensure every cluster id occurs
        clustering = pipeline.clustering_mod.Clustering(
            labels=raw, n_clusters=5, holdout=7
        )
        path = tmp_path / "assign.txt"
        pipeline.write_assignments(ds, clustering, path)
        loaded = pipeline.read_assignments(ds, 5, path)
        assert np.array_equal(loaded.labels, raw)
        assert loaded.holdout == 7
