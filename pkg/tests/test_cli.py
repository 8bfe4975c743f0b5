import json
import hashlib
from pathlib import Path

import numpy as np
import pytest

from kinfuse.cli import (
    ConfigError,
    ExperimentConfig,
    choose_channels,
    main,
    report,
    run_experiment,
)
from kinfuse.data import load_dataset, load_paired


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


GEN = {"n_classes": 2, "prototype_len": 16, "n_rich_channels": 3,
       "n_poor_channels": 2, "poor_gain": 0.5, "poor_noise": 0.8,
       "class_separation": 1.0, "class_blend": 0.0, "label_noise": 0.0,
       "n_rich": 220, "n_poor": 200, "n_paired": 160, "seed": 7}

EXP = {
    "rich_arch": {"n_segments": 4, "conv_layers": [[6, 3, 1]], "rnn_hidden": 5},
    "poor_arch": {"n_segments": 4, "conv_layers": [[4, 3, 1]], "rnn_hidden": 5},
    "train": {"max_epochs": 12, "patience": 5},
    "methods": ["direct", "cheer"],
    "seeds": [0],
}


class TestConfig:
    def test_needs_data_source(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"methods": ["direct"], "seeds": [0]})

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"synthetic": GEN, "methods": ["hda"]})

    def test_bad_ratio(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"synthetic": GEN, "paired_ratio": 0.0})

    def test_explicit_policy_needs_channels(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"synthetic": GEN,
                                        "channel_policy": "explicit"})

    def test_nested_dataclasses_parsed(self):
        cfg = ExperimentConfig.from_dict({"synthetic": GEN, **EXP})
        assert cfg.rich_arch.rnn_hidden == 5
        assert cfg.train.max_epochs == 12


class TestChannelPolicy:
    def _heterogeneous(self):
        from kinfuse.data import SyntheticSpec, generate_synthetic

        spec = SyntheticSpec(n_classes=2, prototype_len=16, n_rich_channels=6,
                             n_poor_channels=6,
                             poor_gain=[1.0, 0.7, 0.45, 0.25, 0.1, 0.02],
                             poor_noise=0.6, class_separation=1.0,
                             class_blend=0.0, label_noise=0.0,
                             n_rich=10, n_poor=500, n_paired=10, seed=1)
        _, h_p, _ = generate_synthetic(spec)
        return h_p

    def test_all_policy(self):
        h_p = self._heterogeneous()
        assert choose_channels(h_p, "all", None, None) == list(range(6))

    def test_top_mi_picks_informative(self):
        h_p = self._heterogeneous()
        top = choose_channels(h_p, "top-mi", 2, None)
        assert set(top) <= {0, 1, 2}

    def test_bottom_mi_picks_noise(self):
        h_p = self._heterogeneous()
        bottom = choose_channels(h_p, "bottom-mi", 2, None)
        assert set(bottom) <= {3, 4, 5}

    def test_ranked_policies_default_to_half(self):
        h_p = self._heterogeneous()
        assert len(choose_channels(h_p, "top-entropy", None, None)) == 3

    def test_explicit(self):
        h_p = self._heterogeneous()
        assert choose_channels(h_p, "explicit", None, [4, 1]) == [4, 1]


@pytest.fixture(scope="module")
def run_dirs(tmp_path_factory):
    """One gen-data + evaluate round trip shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    gen_cfg = write_json(root / "gen.json", GEN)
    assert main(["gen-data", "--config", gen_cfg, "--out", str(root / "data")]) == 0
    exp = dict(EXP, data_dir=str(root / "data"), out_dir=str(root / "results"))
    exp_cfg = write_json(root / "exp.json", exp)
    assert main(["evaluate", "--config", exp_cfg]) == 0
    return root


class TestGenData:
    def test_outputs_loadable(self, run_dirs):
        data = run_dirs / "data"
        h_r = load_dataset(data / "h_r")
        h_p = load_dataset(data / "h_p")
        h_o = load_paired(data / "h_o")
        assert len(h_r) == GEN["n_rich"]
        assert len(h_p) == GEN["n_poor"]
        assert len(h_o) == GEN["n_paired"]
        assert (data / "spec.json").exists()


class TestEvaluate:
    def test_per_seed_files_and_summary(self, run_dirs):
        results = run_dirs / "results"
        for method in ("direct", "cheer"):
            rec = json.loads((results / "seed_0" / method / "metrics.json")
                             .read_text())
            assert 0.0 <= rec["roc_auc"] <= 1.0
        summary = json.loads((results / "summary.json").read_text())
        assert set(summary["methods"]) == {"direct", "cheer"}

    def test_summary_sources_traceable(self, run_dirs):
        summary = json.loads((run_dirs / "results" / "summary.json").read_text())
        for method, row in summary["methods"].items():
            assert row["sources"] == [f"seed_0/{method}/metrics.json"]
            for src in row["sources"]:
                assert (run_dirs / "results" / src).exists()

    def test_aggregate_matches_reaggregation(self, run_dirs):
        results = run_dirs / "results"
        summary = json.loads((results / "summary.json").read_text())
        for method, row in summary["methods"].items():
            vals = [json.loads((results / src).read_text())["roc_auc"]
                    for src in row["sources"]]
            assert row["roc_auc"]["mean"] == pytest.approx(float(np.mean(vals)),
                                                           abs=1e-12)

    def test_report_idempotent(self, run_dirs):
        results = run_dirs / "results"
        def digest():
            h = hashlib.sha256()
            h.update((results / "summary.json").read_bytes())
            h.update((results / "summary.txt").read_bytes())
            return h.hexdigest()

        report(results)
        d1 = digest()
        report(results)
        assert digest() == d1

    def test_single_method_table_has_no_p_values(self, run_dirs, tmp_path):
        exp = dict(EXP, data_dir=str(run_dirs / "data"),
                   out_dir=str(tmp_path / "solo"), methods=["direct"])
        cfg = ExperimentConfig.from_dict(exp)
        summary = run_experiment(cfg)
        assert summary["p_values_roc_auc_cheer_vs"] == {}


class TestSweeps:
    def test_sweep_rows_match_grid(self, run_dirs, tmp_path):
        exp = dict(EXP, data_dir=str(run_dirs / "data"),
                   out_dir=str(tmp_path / "sweep"),
                   methods=["direct", "kd"],
                   train={"max_epochs": 4, "patience": 2},
                   sweep_paired_ratio=[0.2, 0.5])
        cfg = ExperimentConfig.from_dict(exp)
        run_experiment(cfg)
        lines = (tmp_path / "sweep" / "paired_ratio_sweep.csv").read_text() \
            .strip().splitlines()
        assert lines[0] == "paired_ratio,method,roc_auc_mean,roc_auc_std,n_seeds"
        assert len(lines) - 1 == 2 * 2  # ratios x methods


class TestExitCodes:
    def test_missing_config_is_validation_error(self):
        assert main(["evaluate", "--config", "/nonexistent.json"]) == 1

    def test_bad_subcommand_args(self, capsys):
        assert main(["gen-data"]) == 1  # --out required
        capsys.readouterr()

    def test_invalid_config_contents(self, tmp_path):
        bad = write_json(tmp_path / "bad.json", {"methods": ["direct"]})
        assert main(["evaluate", "--config", bad]) == 1

    def test_runtime_failure_is_two(self, tmp_path):
        cfg = write_json(tmp_path / "exp.json",
                         dict(EXP, data_dir=str(tmp_path / "missing_data"),
                              out_dir=str(tmp_path / "out")))
        code = main(["evaluate", "--config", cfg])
        assert code in (1, 2)  # missing referenced files: validation error

    def test_report_on_empty_dir(self, tmp_path):
        assert main(["report", "--results", str(tmp_path)]) == 1


class TestPipelineCommands:
    def test_train_rich_infuse_baseline(self, run_dirs, tmp_path):
        data = str(run_dirs / "data")
        exp = dict(EXP, data_dir=data)
        cfg = write_json(tmp_path / "exp.json", exp)
        rich_out = str(tmp_path / "rich")
        assert main(["train-rich", "--config", cfg, "--out", rich_out]) == 0
        assert main(["infuse", "--config", cfg, "--rich", rich_out,
                     "--out", str(tmp_path / "infused")]) == 0
        rep = json.loads((tmp_path / "infused" / "infusion_report.json")
                         .read_text())
        assert "head_residuals" in rep["behavior"]
        assert main(["baseline", "--method", "kd", "--config", cfg,
                     "--rich", rich_out, "--out", str(tmp_path / "kd")]) == 0
        assert (tmp_path / "kd" / "metrics.json").exists()
        from kinfuse.model import load_model

        model = load_model(tmp_path / "infused" / "model")
        assert model.n_classes == 2

    def test_verify_theory_subcommand(self, tmp_path):
        cfg = write_json(tmp_path / "theory.json", {"eps": 0.3, "n_eval": 40})
        code = main(["verify-theory", "--config", cfg, "--trials", "1",
                     "--seed", "5", "--out", str(tmp_path / "theory")])
        assert code == 0
        rep = json.loads((tmp_path / "theory" / "theory_report.json").read_text())
        assert rep["n_trials"] == 1
