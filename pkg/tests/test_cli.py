"""Command-line workflow: every subcommand, exit codes, reproducibility."""

import json
import subprocess
import sys

import pytest

import unlearnlab as ul
from unlearnlab.cli import main
from unlearnlab.data import load_csv
from unlearnlab.model import load_checkpoint

BASE_CONFIG = {
    "dataset": {
        "synthetic": {
            "num_classes": 3,
            "dim": 4,
            "per_class_train": 40,
            "per_class_test": 20,
            "spread": 2.0,
            "seed": 1,
        }
    },
    "architecture": {"hidden": [8], "embedding_dim": 6},
    "engine": {
        "batch_size": 16,
        "max_epochs": 15,
        "max_unlearn_epochs": 5,
        "learning_rate": 0.1,
        "seed": 1,
    },
    "loss": {"unlearn_weight": 0.05},
    "task": {"kind": "class", "class_id": 1},
}


@pytest.fixture()
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(BASE_CONFIG))
    return str(path)


def run(*argv):
    return main(list(argv))


class TestGenData:
    def test_writes_dataset_and_manifest(self, tmp_path, config_path):
        out = tmp_path / "data"
        assert run("gen-data", "--config", config_path, "--out", str(out)) == 0
        train = load_csv(out / "train.csv")
        test = load_csv(out / "test.csv")
        want_train, want_test = ul.generate_synthetic(3, 4, 40, 20, spread=2.0, seed=1)
        assert train.equals(want_train) and test.equals(want_test)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert (out / "config.echo.json").exists()

    def test_flag_overrides(self, tmp_path, config_path):
        out = tmp_path / "data"
        assert (
            run(
                "gen-data",
                "--config",
                config_path,
                "--out",
                str(out),
                "--classes",
                "2",
                "--dim",
                "5",
            )
            == 0
        )
        train = load_csv(out / "train.csv")
        assert train.num_classes == 2 and train.num_features == 5


class TestTrain:
    def test_synthetic_training_run(self, tmp_path, config_path):
        out = tmp_path / "run"
        assert run("train", "--config", config_path, "--out", str(out)) == 0
        params = load_checkpoint(out / "model.ckpt")
        assert params.arch.input_dim == 4 and params.arch.num_classes == 3
        record = json.loads((out / "run.json").read_text())
        assert record["method"] == "train"
        assert record["termination_reason"] == "epoch-cap"

    def test_csv_round_trip_training(self, tmp_path, config_path):
        data_dir = tmp_path / "data"
        assert run("gen-data", "--config", config_path, "--out", str(data_dir)) == 0
        cfg = dict(BASE_CONFIG)
        cfg["dataset"] = {
            "csv": {
                "train": str(data_dir / "train.csv"),
                "test": str(data_dir / "test.csv"),
                "standardize": True,
            }
        }
        cfg_path = tmp_path / "csv_config.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "run"
        assert run("train", "--config", str(cfg_path), "--out", str(out)) == 0
        assert (out / "model.ckpt").exists()

    def test_seed_flag_overrides_engine_seed(self, tmp_path, config_path):
        out = tmp_path / "run"
        assert run("train", "--config", config_path, "--out", str(out), "--seed", "7") == 0
        record = json.loads((out / "run.json").read_text())
        assert record["config"]["seed"] == 7

    def test_rerun_from_echoed_config_is_identical(self, tmp_path, config_path):
        first = tmp_path / "a"
        assert run("train", "--config", config_path, "--out", str(first)) == 0
        second = tmp_path / "b"
        assert (
            run("train", "--config", str(first / "config.echo.json"), "--out", str(second))
            == 0
        )
        assert (first / "model.ckpt").read_bytes() == (second / "model.ckpt").read_bytes()


class TestUnlearn:
    def trained(self, tmp_path, config_path):
        out = tmp_path / "base"
        assert run("train", "--config", config_path, "--out", str(out)) == 0
        return out / "model.ckpt"

    def test_contrastive(self, tmp_path, config_path):
        ckpt = self.trained(tmp_path, config_path)
        out = tmp_path / "unlearned"
        assert (
            run(
                "unlearn",
                "--config",
                config_path,
                "--out",
                str(out),
                "--method",
                "contrastive",
                "--from",
                str(ckpt),
            )
            == 0
        )
        record = json.loads((out / "run.json").read_text())
        assert record["method"] == "contrastive"
        assert record["termination_reason"] in ("condition-met", "epoch-cap")
        assert load_checkpoint(out / "model.ckpt").arch.num_classes == 3

    def test_every_method_runs(self, tmp_path, config_path):
        ckpt = self.trained(tmp_path, config_path)
        for method in ("finetune", "neggrad", "retrain"):
            out = tmp_path / method
            assert (
                run(
                    "unlearn",
                    "--config",
                    config_path,
                    "--out",
                    str(out),
                    "--method",
                    method,
                    "--from",
                    str(ckpt),
                )
                == 0
            )
            assert json.loads((out / "run.json").read_text())["method"] == method

    def test_retrain_warns_about_ignored_checkpoint(self, tmp_path, config_path, capsys):
        ckpt = self.trained(tmp_path, config_path)
        out = tmp_path / "retrained"
        assert (
            run(
                "unlearn",
                "--config",
                config_path,
                "--out",
                str(out),
                "--method",
                "retrain",
                "--from",
                str(ckpt),
            )
            == 0
        )
        assert "retrain ignores the starting checkpoint" in capsys.readouterr().err

    def test_missing_checkpoint_flag_is_usage_error(self, tmp_path, config_path):
        out = tmp_path / "unlearned"
        code = run(
            "unlearn", "--config", config_path, "--out", str(out), "--method", "contrastive"
        )
        assert code == 2


class TestEvalAndMia:
    @pytest.fixture()
    def world(self, tmp_path, config_path):
        base = tmp_path / "base"
        assert run("train", "--config", config_path, "--out", str(base)) == 0
        unlearned = tmp_path / "unlearned"
        assert (
            run(
                "unlearn",
                "--config",
                config_path,
                "--out",
                str(unlearned),
                "--method",
                "contrastive",
                "--from",
                str(base / "model.ckpt"),
            )
            == 0
        )
        retrained = tmp_path / "retrained"
        assert (
            run(
                "unlearn",
                "--config",
                config_path,
                "--out",
                str(retrained),
                "--method",
                "retrain",
            )
            == 0
        )
        return tmp_path

    def test_eval_with_reference(self, world, config_path):
        out = world / "report"
        assert (
            run(
                "eval",
                "--config",
                config_path,
                "--out",
                str(out),
                "--model",
                str(world / "unlearned" / "model.ckpt"),
                "--reference",
                str(world / "retrained" / "model.ckpt"),
            )
            == 0
        )
        report = json.loads((out / "eval.json").read_text())
        assert report["task_kind"] == "class"
        assert set(report["accuracies"]) == {"unlearn_train", "unlearn_test", "remain_test"}
        assert report["deltas"] is not None
        assert (out / "geometry.csv").exists()

    def test_eval_requires_model(self, world, config_path):
        assert run("eval", "--config", config_path, "--out", str(world / "x")) == 2

    def test_mia_report(self, world, config_path):
        out = world / "mia"
        assert (
            run(
                "mia",
                "--config",
                config_path,
                "--out",
                str(out),
                "--model",
                str(world / "unlearned" / "model.ckpt"),
            )
            == 0
        )
        report = json.loads((out / "mia.json").read_text())
        assert 0.0 <= report["member_rate_unlearn"] <= 1.0
        assert report["members_size"] > 0


class TestFailureModes:
    def test_unknown_config_fields_are_listed(self, tmp_path, capsys):
        cfg = dict(BASE_CONFIG)
        cfg["typo_field"] = 1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(cfg))
        assert run("train", "--config", str(path), "--out", str(tmp_path / "o")) == 2
        assert "typo_field" in capsys.readouterr().err

    def test_unlearn_without_task_is_usage_error(self, tmp_path):
        cfg = {k: v for k, v in BASE_CONFIG.items() if k != "task"}
        path = tmp_path / "no_task.json"
        path.write_text(json.dumps(cfg))
        code = run(
            "unlearn", "--config", str(path), "--out", str(tmp_path / "o"),
            "--method", "retrain",
        )
        assert code == 2

    def test_garbage_checkpoint_is_reported(self, tmp_path, config_path, capsys):
        bad = tmp_path / "junk.ckpt"
        bad.write_bytes(b"not a checkpoint")
        code = run(
            "eval", "--config", config_path, "--out", str(tmp_path / "o"),
            "--model", str(bad),
        )
        assert code == 3
        assert "error" in capsys.readouterr().err

    def test_missing_checkpoint_file_is_reported(self, tmp_path, config_path, capsys):
        code = run(
            "eval", "--config", config_path, "--out", str(tmp_path / "o"),
            "--model", str(tmp_path / "nowhere.ckpt"),
        )
        assert code == 3
        capsys.readouterr()

    def test_invalid_json_config(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert run("train", "--config", str(path), "--out", str(tmp_path / "o")) == 2


def test_module_entrypoint_reports_version():
    out = subprocess.run(
        [sys.executable, "-m", "unlearnlab", "--version"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0
    assert ul.__version__ in out.stdout
