import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from aghint.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, read_csv_rows
from aghint.disparity import bucketize, neighborhood_disparity
from aghint.hin import load_graph
from aghint.runconfig import ConfigError, RunConfig, all_keys, apply_override, load_run_config

TINY = ["--synth.num_target", "90", "--model.d0", "8", "--model.d_hidden", "8",
        "--model.k_top", "3", "--model.k_btm", "3", "--model.n", "4", "--train.max_epochs", "3"]


def _status(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    return json.loads(lines[-1])


def _run(capsys, *argv):
    code = main(list(argv))
    return code, _status(capsys)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synth dataset plus two trained checkpoints shared by the artifact tests."""
    root = tmp_path_factory.mktemp("cli")
    common = ["--data", str(root / "data"), "--cache", str(root / "cache")] + TINY
    assert main(["synth", "--out", str(root / "synth")] + common) == 0
    assert main(["train", "--out", str(root / "full")] + common) == 0
    assert main(["train", "--variant", "no_ag", "--out", str(root / "no_ag")] + common) == 0
    return root, common


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        code, status = _run(capsys, "train", "--help")
        assert code == EXIT_OK and status["status"] == "ok"

    def test_help_in_subprocess(self):
        proc = subprocess.run([sys.executable, "-m", "aghint.cli", "train", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "--model.alpha" in proc.stdout
        assert json.loads(proc.stderr.strip().splitlines()[-1])["code"] == 0

    def test_missing_dataset_names_path(self, capsys, tmp_path):
        code, status = _run(capsys, "train", "--data", str(tmp_path / "absent"), "--out", str(tmp_path))
        assert code == EXIT_DATA
        assert "absent" in status["message"]
        assert status["status"] == "error"

    def test_bad_flag(self, capsys):
        code, status = _run(capsys, "train", "--no-such-flag")
        assert code == EXIT_USAGE and status["error"] == "UsageError"

    def test_missing_command(self, capsys):
        code, _ = _run(capsys)
        assert code == EXIT_USAGE

    def test_unknown_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"model": {"depth": 3}}))
        code, status = _run(capsys, "synth", "--config", str(cfg), "--data", str(tmp_path / "d"))
        assert code == EXIT_DATA and "depth" in status["message"]

    def test_invalid_value_is_data_error(self, capsys, tmp_path):
        code, _ = _run(capsys, "synth", "--set", "synth.rho=1.5", "--data", str(tmp_path / "d"))
        assert code == EXIT_DATA

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_is_numeric_error(self, capsys, workspace, tmp_path):
        root, common = workspace
        code, status = _run(capsys, "train", *common, "--out", str(tmp_path),
                            "--train.lr", "1e30", "--train.max_epochs", "20")
        assert code == EXIT_NUMERIC
        assert "lr=" in status["message"]

    def test_bad_threads(self, capsys, tmp_path):
        code, _ = _run(capsys, "synth", "--threads", "0", "--data", str(tmp_path / "d"))
        assert code == EXIT_USAGE


class TestArtifacts:
    def test_synth_output(self, workspace):
        root, _ = workspace
        g = load_graph(root / "data")
        assert g.num_targets == 90
        summary = json.loads((root / "data" / "synth_summary.json").read_text())
        assert summary["run"]["config"]["synth"]["num_target"] == 90
        assert summary["run"]["inputs"]["graph_hash"] == g.content_hash()

    def test_train_artifacts_echo_config(self, workspace):
        root, _ = workspace
        out = root / "full"
        for name in ("checkpoint.ckpt", "metrics.json", "loss.csv", "predictions.csv", "training.png"):
            assert (out / name).is_file(), name
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["run"]["config"]["model"]["d_hidden"] == 8
        assert metrics["run"]["config"]["train"]["max_epochs"] == 3
        header = (out / "loss.csv").read_text().splitlines()[0]
        assert header.startswith("# ") and "config_hash" in json.loads(header[2:])
        assert json.loads(header[2:])["config_hash"] == metrics["run"]["config_hash"]
        preds = read_csv_rows(out / "predictions.csv")
        assert len(preds) == 90
        assert {r["split"] for r in preds} == {"train", "val", "test"}

    def test_profile_counts_match_bucketize(self, capsys, workspace, tmp_path):
        root, common = workspace
        code, status = _run(capsys, "profile", *common, "--out", str(tmp_path), "--k", "2",
                            "--buckets", "4")
        assert code == EXIT_OK
        profile = json.loads((tmp_path / "profile.json").read_text())
        want = bucketize(neighborhood_disparity(load_graph(root / "data"), 2), 4)
        assert_array_equal(profile["counts"], want.counts())
        rows = read_csv_rows(tmp_path / "profile.csv")
        assert_array_equal([int(r["bucket"]) for r in rows], want.bucket_of)
        assert (tmp_path / "profile.png").is_file()
        assert str(tmp_path / "profile.png") in status["artifacts"]

    def test_profile_with_predictions(self, capsys, workspace, tmp_path):
        root, common = workspace
        code, _ = _run(capsys, "profile", *common, "--out", str(tmp_path),
                       "--predictions", str(root / "full" / "predictions.csv"))
        assert code == EXIT_OK
        profile = json.loads((tmp_path / "profile.json").read_text())
        assert len(profile["bucket_accuracy"]) == 5

    def test_precompute_and_cache(self, capsys, workspace, tmp_path):
        root, common = workspace
        code, status = _run(capsys, "precompute", *common, "--cache", str(tmp_path),
                            "--out", str(tmp_path), "--json-export", str(tmp_path / "g.json"))
        assert code == EXIT_OK
        assert list(tmp_path.glob("*.npz"))
        exported = json.loads((tmp_path / "g.json").read_text())
        assert len(exported["attr_sequences"]) == 90

    def test_eval_reproduces_training_metrics(self, capsys, workspace, tmp_path):
        root, common = workspace
        code, _ = _run(capsys, "eval", *common, "--out", str(tmp_path),
                       "--checkpoint", str(root / "full" / "checkpoint.ckpt"))
        assert code == EXIT_OK
        ev = json.loads((tmp_path / "eval.json").read_text())
        trained = json.loads((root / "full" / "metrics.json").read_text())
        assert ev["test"]["micro_f1"] == pytest.approx(trained["micro_f1"], abs=1e-6)

    def test_eval_rejects_other_graph(self, capsys, workspace, tmp_path):
        root, common = workspace
        other = tmp_path / "other"
        assert main(["synth", "--data", str(other), "--out", str(tmp_path), "--seed", "99"] + TINY) == 0
        capsys.readouterr()
        code, _ = _run(capsys, "eval", *TINY, "--data", str(other), "--cache", str(root / "cache"),
                       "--out", str(tmp_path), "--checkpoint", str(root / "full" / "checkpoint.ckpt"))
        assert code == EXIT_DATA

    def test_case_study(self, capsys, workspace, tmp_path):
        root, common = workspace
        code, status = _run(capsys, "case-study", *common, "--out", str(tmp_path),
                            "--checkpoint-a", str(root / "full" / "checkpoint.ckpt"),
                            "--checkpoint-b", str(root / "no_ag" / "checkpoint.ckpt"),
                            "--label-a", "full", "--label-b", "no_ag")
        assert code == EXIT_OK
        study = json.loads((tmp_path / "case_study.json").read_text())
        assert len(study["rows"]) == 5
        assert (tmp_path / "case_study.png").is_file()
        rows = read_csv_rows(tmp_path / "case_study.csv")
        assert [int(r["bucket"]) for r in rows] == list(range(5))

    def test_sweep(self, capsys, workspace, tmp_path):
        root, common = workspace
        code, _ = _run(capsys, "sweep", *common, "--out", str(tmp_path), "--alpha", "0.5,1.0",
                       "--train.max_epochs", "2")
        assert code == EXIT_OK
        sweep = json.loads((tmp_path / "sweep.json").read_text())
        assert [c["params"]["alpha"] for c in sweep["cells"]] == [0.5, 1.0]
        assert (tmp_path / "sweep.png").is_file()


class TestRunConfig:
    def test_defaults_round_trip(self, tmp_path):
        cfg = RunConfig()
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        back = load_run_config(path)
        assert back.hash() == cfg.hash()

    def test_overrides_parse_json(self):
        cfg = RunConfig()
        apply_override(cfg, "model.d0=64")
        apply_override(cfg, "model.variant=no_ag")
        apply_override(cfg, "train.ratios=[50,25,25]")
        apply_override(cfg, "model.r_top=null")
        assert (cfg.model.d0, cfg.model.variant, cfg.train.ratios) == (64, "no_ag", (50, 25, 25))
        assert cfg.model.r_top is None

    @pytest.mark.parametrize("bad", ["model.depth=2", "nothing=1", "model.d0=abc", "model.d0=1.5",
                                     "model.ffn_in_agt=1", "train", "model.r_top=1.5"])
    def test_rejected_overrides(self, bad):
        with pytest.raises(ConfigError):
            apply_override(RunConfig(), bad)

    def test_validation(self):
        with pytest.raises(ConfigError):
            load_run_config(overrides=["model.variant=other"])
        with pytest.raises(ConfigError):
            load_run_config(overrides=["buckets=1"])

    def test_every_key_has_a_flag(self):
        from aghint.cli import build_parser
        text = build_parser()._subparsers._group_actions[0].choices["train"].format_help()
        for key in all_keys():
            assert f"--{key}" in text

    def test_shipped_configs_load(self):
        from pathlib import Path
        root = Path(__file__).resolve().parents[1] / "configs"
        for path in sorted(root.glob("*.json")):
            load_run_config(path)

    def test_float_accepts_int(self):
        cfg = load_run_config(overrides=["train.lr=1"])
        assert cfg.train.lr == 1.0 and isinstance(cfg.train.lr, float)
        assert np.isclose(cfg.model.alpha, 0.8)
