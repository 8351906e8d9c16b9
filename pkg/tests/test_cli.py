import json

import pytest
from click.testing import CliRunner

from topiclab.cli import main
from conftest import RAW_CORPUS


def invoke(config_path, *args):
    return CliRunner().invoke(
        main, ["--config", str(config_path), *args], catch_exceptions=False
    )


def write_config(root, **overrides):
    config = {
        "pipeline_dir": ".",
        "window_start": "2006-01-01",
        "window_end": "2023-12-31",
        "language": "English",
        "provider": {"kind": "stub", "dim": 10, "seed": 0},
        "fetch": {"kind": "file", "path": RAW_CORPUS},
        "optimizer": {"steps": 3, "seed": 2, "threshold": 0.30},
        # a friendly space so short searches always find a valid trial
        "search_space": {
            "n_neighbors": [10, 20, 5],
            "n_components": [2, 4, 2],
            "min_samples": [5, 10, 5],
            "min_cluster_size": [20, 40, 10],
        },
    }
    config.update(overrides)
    path = root / "pipeline.json"
    path.write_text(json.dumps(config))
    return path


class TestFullPipeline:
    def test_artifacts_exist(self, pipeline_dir):
        for name in (
            "raw.ndjson",
            "corpus.ndjson",
            "corpus.meta.json",
            "embeddings.bin",
            "embeddings.json",
            "best_trial.json",
            "project.json",
            "series/index.json",
            "series/g12.csv",
            "registry/trial_log.jsonl",
        ):
            assert (pipeline_dir / name).exists(), name

    def test_project_descriptor_contents(self, pipeline_dir):
        project = json.loads((pipeline_dir / "project.json").read_text())
        assert project["topic_count"] == 5
        assert project["document_count"] == 1000
        assert project["dbcv_score"] >= 0.8
        assert project["noise_fraction"] <= 0.05

    def test_clean_report_accounts_for_fixture_dirt(self, pipeline_dir):
        meta = json.loads((pipeline_dir / "corpus.meta.json").read_text())
        report = meta["report"]
        assert report["input_count"] == 1025
        assert report["output_count"] == 1000
        assert report["dropped_missing_fields"] == 5
        assert report["dropped_duplicates"] == 10
        assert report["dropped_out_of_window"] == 5
        assert report["dropped_language"] == 5

    def test_clean_rerun_reports_zero_drops(self, pipeline_dir):
        result = invoke(pipeline_dir / "pipeline.json", "clean")
        assert result.exit_code == 0
        report = json.loads(result.output.strip().splitlines()[-1])
        assert report["output_count"] == report["input_count"] == 1000
        assert report["dropped_duplicates"] == 0

    def test_report_command(self, pipeline_dir):
        result = invoke(pipeline_dir / "pipeline.json", "report")
        assert result.exit_code == 0
        stats = json.loads((pipeline_dir / "stats.json").read_text())
        assert sum(stats["per_year_counts"].values()) == 1000
        summary = json.loads((pipeline_dir / "trials_summary.json").read_text())
        assert summary["n_trials"] == 20
        curve = [s for s in summary["best_so_far"] if s is not None]
        assert curve == sorted(curve)

    def test_prune_registry(self, pipeline_dir):
        result = invoke(pipeline_dir / "pipeline.json", "prune-registry")
        assert result.exit_code == 0


class TestExitCodes:
    def test_missing_upstream_artifact_exit_2(self, tmp_path):
        config = write_config(tmp_path)
        result = CliRunner().invoke(main, ["--config", str(config), "embed"])
        assert result.exit_code == 2

    def test_missing_config_exit_2(self, tmp_path):
        result = CliRunner().invoke(
            main, ["--config", str(tmp_path / "nope.json"), "clean"]
        )
        assert result.exit_code == 2

    def test_fingerprint_mismatch_exit_3(self, tmp_path):
        config = write_config(tmp_path)
        for cmd in ("fetch", "clean", "embed"):
            assert invoke(config, cmd).exit_code == 0
        # corrupt the corpus after embedding: optimize must refuse
        corpus = tmp_path / "corpus.ndjson"
        lines = corpus.read_text().splitlines()
        corpus.write_text("\n".join(lines[:-1]) + "\n")
        result = CliRunner().invoke(
            main, ["--config", str(config), "optimize", "--steps", "2"]
        )
        assert result.exit_code == 3

    def test_provider_drift_exit_3(self, tmp_path):
        config_path = write_config(tmp_path)
        for cmd in ("fetch", "clean", "embed"):
            assert invoke(config_path, cmd).exit_code == 0
        config = json.loads(config_path.read_text())
        config["provider"] = {"kind": "stub", "dim": 10, "seed": 99}
        config_path.write_text(json.dumps(config))
        result = CliRunner().invoke(
            main, ["--config", str(config_path), "optimize", "--steps", "2"]
        )
        assert result.exit_code == 3


class TestDeterminism:
    @pytest.mark.parametrize("seed", [7])
    def test_optimize_twice_identical_logs(self, tmp_path, seed):
        logs = []
        for run in range(2):
            root = tmp_path / f"run{run}"
            root.mkdir()
            config = write_config(root)
            for cmd in ("fetch", "clean", "embed"):
                assert invoke(config, cmd).exit_code == 0
            result = CliRunner().invoke(
                main,
                ["--config", str(config), "optimize", "--steps", "3",
                 "--seed", str(seed)],
            )
            assert result.exit_code == 0
            logs.append((root / "registry/trial_log.jsonl").read_bytes())
        assert logs[0] == logs[1]


class TestLock:
    def test_concurrent_command_refused(self, tmp_path):
        config = write_config(tmp_path)
        assert invoke(config, "fetch").exit_code == 0
        (tmp_path / ".lock").write_text("12345")
        result = CliRunner().invoke(main, ["--config", str(config), "clean"])
        assert result.exit_code == 1
        (tmp_path / ".lock").unlink()
        assert invoke(config, "clean").exit_code == 0
