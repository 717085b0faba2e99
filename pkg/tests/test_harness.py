"""Tests for config parsing, the training loop, evaluation, and the CLI."""

import json
import os

import numpy as np
import pytest

from ltlab.backbone import load_params
from ltlab.cli import main as cli_main
from ltlab.data import read_dataset
from ltlab.errors import ConfigError
from ltlab.harness import (
    ExperimentConfig,
    OUTPUT_ROOT_ENV,
    analyze_ot,
    check_theory,
    checkpoint_hash,
    cosine_lr,
    evaluate_checkpoint,
    train,
)


def tiny_config(out_dir, seed=0, epochs=2, head=None, lr=0.05):
    d = {
        "dataset": {
            "profile": {"num_classes": 4, "n_max": 60, "imbalance_factor": 10.0},
            "gen": {"image_size": 16, "noise_std": 0.15, "contrast": 0.5},
        },
        "backbone": {
            "embed_dim": 16,
            "depth": 2,
            "heads": 2,
            "ffn_hidden": 32,
            "adapter": {"bottleneck_dim": 4},
        },
        "optimizer": {"epochs": epochs, "batch_size": 16, "lr": lr},
        "seed": seed,
        "output_dir": out_dir,
        "t_many": 30,
        "t_few": 10,
    }
    if head:
        d["head"] = head
    return ExperimentConfig.from_dict(d)


class TestConfigParsing:
    def test_unknown_keys_rejected_at_every_level(self):
        base = tiny_config("x").to_dict()
        for path in ("top", "dataset", "optimizer", "head", "backbone"):
            d = json.loads(json.dumps(base))
            if path == "top":
                d["typo"] = 1
            else:
                d.setdefault(path if path != "top" else "", {})
                d[path]["typo"] = 1
            with pytest.raises(ConfigError):
                ExperimentConfig.from_dict(d)

    def test_dataset_requires_exactly_one_source(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"dataset": {}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(
                {
                    "dataset": {
                        "path": "x.ltds",
                        "profile": {"num_classes": 2, "n_max": 10, "imbalance_factor": 2.0},
                    }
                }
            )

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="missing.json"):
            ExperimentConfig.from_json(str(tmp_path / "missing.json"))

    def test_round_trips_through_dict(self, tmp_path):
        cfg = tiny_config(str(tmp_path / "run"))
        clone = ExperimentConfig.from_dict(cfg.to_dict())
        assert clone.to_dict() == cfg.to_dict()

    def test_output_root_env_override(self, tmp_path, monkeypatch):
        cfg = tiny_config("relative/run")
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        assert cfg.resolved_output_dir() == str(tmp_path / "relative" / "run")
        monkeypatch.delenv(OUTPUT_ROOT_ENV)
        assert cfg.resolved_output_dir() == "relative/run"


class TestCosineSchedule:
    def test_starts_at_base_and_decays(self):
        lrs = [cosine_lr(0.1, e, 10) for e in range(10)]
        assert lrs[0] == pytest.approx(0.1)
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        assert lrs[-1] > 0.0


class TestTraining:
    def test_loss_decreases_on_separable_data(self, tmp_path, capsys):
        cfg = tiny_config(str(tmp_path / "run"), epochs=3)
        record = train(cfg, verbose=True)
        losses = [h["train_loss"] for h in record["history"]]
        assert losses[-1] < losses[0]
        out = capsys.readouterr().out
        assert out.count("epoch") == 3 and "val:" in out

    def test_zero_lr_keeps_parameters_and_loss_constant(self, tmp_path):
        cfg = tiny_config(str(tmp_path / "a"), epochs=2, lr=0.0)
        record = train(cfg, verbose=False)
        losses = [h["train_loss"] for h in record["history"]]
        assert losses[0] == pytest.approx(losses[1], abs=1e-12)
        # a second run with one epoch produces the identical initial state
        cfg2 = tiny_config(str(tmp_path / "b"), epochs=1, lr=0.0)
        record2 = train(cfg2, verbose=False)
        arrays_a, _ = load_params(str(tmp_path / "a" / "checkpoint"))
        arrays_b, _ = load_params(str(tmp_path / "b" / "checkpoint"))
        for name, value in arrays_a.items():
            np.testing.assert_array_equal(value, arrays_b[name])

    def test_same_seed_bitwise_identical_runs(self, tmp_path):
        rec1 = train(tiny_config(str(tmp_path / "r1"), seed=3), verbose=False)
        rec2 = train(tiny_config(str(tmp_path / "r2"), seed=3), verbose=False)
        assert rec1["checkpoint_hash"] == rec2["checkpoint_hash"]
        h1 = json.dumps(rec1["history"], sort_keys=True)
        h2 = json.dumps(rec2["history"], sort_keys=True)
        assert h1 == h2
        assert rec1["final"] == rec2["final"]

    def test_different_seed_differs(self, tmp_path):
        rec1 = train(tiny_config(str(tmp_path / "r1"), seed=0), verbose=False)
        rec2 = train(tiny_config(str(tmp_path / "r2"), seed=1), verbose=False)
        assert rec1["checkpoint_hash"] != rec2["checkpoint_hash"]

    def test_frozen_bytes_in_checkpoint_match_fresh_init(self, tmp_path):
        from ltlab.harness import build_model
        from ltlab.backbone import partition_params

        cfg = tiny_config(str(tmp_path / "run"))
        record = train(cfg, verbose=False)
        arrays, _ = load_params(str(tmp_path / "run" / "checkpoint"))
        backbone, head = build_model(cfg, 4)
        frozen, _ = partition_params(backbone.param_list() + head.param_list())
        assert frozen
        for p in frozen:
            np.testing.assert_array_equal(arrays[p.name], p.data)

    def test_single_head_baseline_runs(self, tmp_path):
        cfg = tiny_config(
            str(tmp_path / "run"), head={"kind": "single", "loss": {"kind": "LA", "tau": 1.0}}
        )
        record = train(cfg, verbose=False)
        assert record["config"]["head"]["kind"] == "single"

    def test_memorizing_run_near_perfect_train_accuracy(self, tmp_path):
        cfg = ExperimentConfig.from_dict(
            {
                "dataset": {
                    "profile": {"num_classes": 4, "n_max": 40, "imbalance_factor": 5.0},
                    "gen": {"image_size": 16, "noise_std": 0.1, "contrast": 0.5},
                },
                "backbone": {
                    "embed_dim": 32, "depth": 2, "heads": 2, "ffn_hidden": 64,
                    "adapter": {"bottleneck_dim": 8},
                },
                "optimizer": {"epochs": 150, "batch_size": 8, "lr": 0.05},
                "seed": 0,
                "output_dir": str(tmp_path / "run"),
                "t_many": 30,
                "t_few": 10,
                "selection": "last",
            }
        )
        record = train(cfg, verbose=False)
        assert record["final"]["train"]["ovacc"] > 90.0

    def test_image_size_mismatch_rejected(self, tmp_path):
        d = tiny_config(str(tmp_path / "run")).to_dict()
        d["dataset"]["gen"]["image_size"] = 8
        d["dataset"]["gen"]["grid"] = 4
        with pytest.raises(ConfigError):
            train(ExperimentConfig.from_dict(d), verbose=False)


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("eval")
    data_dir = str(base / "d.ltds")
    assert cli_main(
        [
            "synth-data", "--classes", "4", "--if", "10", "--nmax", "60",
            "--seed", "0", "-o", data_dir,
        ]
    ) == 0
    run_dir = str(base / "run")
    cfg = tiny_config(run_dir)
    cfg.dataset.path = data_dir
    cfg.dataset.profile = None
    train(cfg, verbose=False)
    return run_dir, data_dir


class TestEvaluation:

    def test_eval_matches_training_report(self, trained_run):
        run_dir, data_dir = trained_run
        report, _, _ = evaluate_checkpoint(
            os.path.join(run_dir, "checkpoint"), data_dir, t_many=30, t_few=10
        )
        with open(os.path.join(run_dir, "run_record.json")) as fh:
            record = json.load(fh)
        assert report.ovacc == pytest.approx(record["final"]["test"]["ovacc"])
        assert report.bscore == pytest.approx(record["final"]["test"]["bscore"])

    def test_groups_omitted_when_disabled(self, trained_run):
        run_dir, data_dir = trained_run
        report, _, _ = evaluate_checkpoint(
            os.path.join(run_dir, "checkpoint"), data_dir, with_groups=False
        )
        assert report.groups is None

    def test_prediction_source_routing(self, trained_run):
        run_dir, data_dir = trained_run
        ckpt = os.path.join(run_dir, "checkpoint")
        ens, _, _ = evaluate_checkpoint(ckpt, data_dir, t_many=30, t_few=10)
        s1, _, _ = evaluate_checkpoint(ckpt, data_dir, t_many=30, t_few=10, predict_from="s1")
        s2, _, _ = evaluate_checkpoint(ckpt, data_dir, t_many=30, t_few=10, predict_from="s2")
        assert (ens.ovacc, ens.macro) != (s1.ovacc, s1.macro) or (
            ens.ovacc,
            ens.macro,
        ) != (s2.ovacc, s2.macro)

    def test_class_count_mismatch_rejected(self, trained_run, tmp_path):
        run_dir, _ = trained_run
        other = str(tmp_path / "other.ltds")
        cli_main(
            ["synth-data", "--classes", "3", "--if", "5", "--nmax", "40", "-o", other]
        )
        with pytest.raises(ConfigError):
            evaluate_checkpoint(os.path.join(run_dir, "checkpoint"), other)

    def test_analyze_ot_json_fields(self, trained_run):
        run_dir, data_dir = trained_run
        result = analyze_ot(
            os.path.join(run_dir, "checkpoint"), data_dir, epsilon=1e-2, max_samples=32
        )
        assert set(result) >= {
            "epsilon", "p", "iterations", "marginal_violation", "cost",
            "cost_root", "normalization",
        }
        assert result["cost"] >= 0
        assert result["marginal_violation"] < 1e-8
        assert result["cost_root"] == pytest.approx(result["cost"] ** 0.5)

    def test_check_theory_json_fields(self, trained_run):
        run_dir, data_dir = trained_run
        result = check_theory(
            os.path.join(run_dir, "checkpoint"),
            data_dir,
            num_samples=24,
            num_hypotheses=8,
            num_sigma_draws=500,
        )
        assert result["holds"] and result["per_draw_holds"]
        assert result["r_sum"] <= result["r1"] + result["r2"] + 3 * result["stderrs"]["combined"]


class TestCli:
    def test_synth_data_counts(self, tmp_path, capsys):
        out = str(tmp_path / "d.ltds")
        code = cli_main(
            ["synth-data", "--classes", "10", "--if", "100", "--nmax", "500",
             "--seed", "0", "-o", out]
        )
        assert code == 0
        bundle = read_dataset(out)
        assert bundle.counts[0] == 500 and bundle.counts[-1] == 5

    def test_train_missing_config_names_path(self, capsys):
        code = cli_main(["train", "--config", "missing.json"])
        assert code == 1
        assert "missing.json" in capsys.readouterr().err

    def test_report_two_runs(self, tmp_path, capsys):
        runs = []
        for seed in (0, 1):
            run_dir = str(tmp_path / f"run{seed}")
            train(tiny_config(run_dir, seed=seed), verbose=False)
            runs.append(run_dir)
        out_dir = str(tmp_path / "report")
        code = cli_main(["report", *runs, "-o", out_dir])
        assert code == 0
        with open(os.path.join(out_dir, "comparison.csv")) as fh:
            lines = fh.read().strip().splitlines()
        assert len(lines) == 3  # header + two data rows
        assert lines[0].startswith("run,objective,ovacc,macro,bscore")
        assert os.path.exists(os.path.join(out_dir, "per_class_accuracy.png"))
        assert os.path.exists(os.path.join(out_dir, "metric_comparison.png"))

    def test_report_bscore_column_consistent(self, tmp_path):
        import csv as csv_mod
        from ltlab.metrics import bscore

        run_dir = str(tmp_path / "run")
        train(tiny_config(run_dir), verbose=False)
        out_dir = str(tmp_path / "report")
        cli_main(["report", run_dir, "-o", out_dir])
        with open(os.path.join(out_dir, "comparison.csv")) as fh:
            row = next(csv_mod.DictReader(fh))
        assert abs(
            float(row["bscore"]) - bscore(float(row["ovacc"]), float(row["macro"]))
        ) < 1e-10

    def test_eval_cli_writes_outputs(self, tmp_path):
        data_dir = str(tmp_path / "d.ltds")
        cli_main(["synth-data", "--classes", "4", "--if", "10", "--nmax", "60", "-o", data_dir])
        run_dir = str(tmp_path / "run")
        cfg = tiny_config(run_dir)
        cfg.dataset.path = data_dir
        cfg.dataset.profile = None
        train(cfg, verbose=False)
        out_dir = str(tmp_path / "evalout")
        code = cli_main(
            ["eval", "--checkpoint", os.path.join(run_dir, "checkpoint"),
             "--data", data_dir, "--t-many", "30", "--t-few", "10", "-o", out_dir]
        )
        assert code == 0
        assert os.path.exists(os.path.join(out_dir, "eval_report.json"))
        assert os.path.exists(os.path.join(out_dir, "per_class.csv"))

    def test_checkpoint_hash_stable(self, tmp_path):
        run_dir = str(tmp_path / "run")
        train(tiny_config(run_dir), verbose=False)
        ckpt = os.path.join(run_dir, "checkpoint")
        assert checkpoint_hash(ckpt) == checkpoint_hash(ckpt)

    def test_analyze_ot_and_check_theory_subcommands(self, tmp_path, capsys):
        data_dir = str(tmp_path / "d.ltds")
        cli_main(["synth-data", "--classes", "4", "--if", "10", "--nmax", "60", "-o", data_dir])
        run_dir = str(tmp_path / "run")
        cfg = tiny_config(run_dir)
        cfg.dataset.path = data_dir
        cfg.dataset.profile = None
        train(cfg, verbose=False)
        ckpt = os.path.join(run_dir, "checkpoint")

        ot_out = str(tmp_path / "ot.json")
        code = cli_main(
            ["analyze-ot", "--checkpoint", ckpt, "--data", data_dir,
             "--max-samples", "24", "-o", ot_out]
        )
        assert code == 0
        with open(ot_out) as fh:
            ot = json.load(fh)
        assert {"epsilon", "p", "iterations", "marginal_violation", "cost",
                "cost_root", "normalization"} <= set(ot)

        th_out = str(tmp_path / "theory.json")
        code = cli_main(
            ["check-theory", "--checkpoint", ckpt, "--data", data_dir,
             "--samples", "16", "--hypotheses", "6", "--draws", "400", "-o", th_out]
        )
        assert code == 0
        with open(th_out) as fh:
            th = json.load(fh)
        assert {"r1", "r2", "r_sum", "stderrs", "holds"} <= set(th)


class TestPretrainedWeights:
    def test_backbone_weights_injection(self, tmp_path):
        """A saved checkpoint's backbone weights seed a new run via weights_path."""
        from ltlab.backbone import save_params
        from ltlab.harness import build_model

        donor_cfg = tiny_config(str(tmp_path / "donor"), seed=5)
        donor_backbone, _ = build_model(donor_cfg, 4)
        weights_dir = str(tmp_path / "weights")
        save_params(donor_backbone.param_list(), weights_dir)

        d = tiny_config(str(tmp_path / "run"), seed=0).to_dict()
        d["backbone"]["weights_path"] = weights_dir
        cfg = ExperimentConfig.from_dict(d)
        backbone, _ = build_model(cfg, 4)
        for name, p in donor_backbone.params.items():
            np.testing.assert_array_equal(backbone.params[name].data, p.data)
