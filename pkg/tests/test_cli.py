"""Tests for the vpo-lab command line."""

import json

import pytest
from typer.testing import CliRunner

from vpo_lab import __version__
from vpo_lab.commands.run import build_overrides
from vpo_lab.main import app

runner = CliRunner()


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({
        "experiment": {"eval_samples": 2},
        "vpo": {"steps": 2, "sampler_steps": 2, "eval_interval": 1, "n_candidates": 3},
        "model": {"n_frames": 6, "n_classes": 3, "T": 10, "beta_end": 0.2, "hidden": [8], "time_embed_width": 4},
        "pretrain": {"epochs": 1, "n_per_class": 4, "batch_size": 6},
    }))
    return path


class TestTopLevel:
    def test_version(self):
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.stdout

    def test_help_lists_commands(self):
        """Test every experiment kind is listed under run."""
        result = runner.invoke(app, ["run", "--help"])
        assert result.exit_code == 0
        for name in ("pretrain", "online-vpo", "offline-dpo", "refl", "rm-eval", "sweep"):
            assert name in result.stdout


class TestBuildOverrides:
    """Flag to config-section mapping."""

    def test_unset_flags_stay_none(self):
        """Test flags left unset never override the config file."""
        overrides = build_overrides("refl")
        assert overrides["experiment"]["kind"] == "refl"
        assert overrides["experiment"]["seeds"] is None
        assert overrides["vpo"]["steps"] is None
        assert overrides["sweep"]["values"] is None

    def test_sweep_values_split(self):
        """Test comma-separated sweep values are split and stripped."""
        overrides = build_overrides("sweep", sweep_param="k_interval", sweep_values="none, 100,200")
        assert overrides["sweep"] == {"param": "k_interval", "values": ["none", "100", "200"]}

    def test_repeated_seeds(self):
        """Test repeated --seed options become a seed list."""
        assert build_overrides("online_vpo", seed=[3, 4])["experiment"]["seeds"] == [3, 4]

    def test_feedback_flag(self):
        """Test --feedback lands in the trainer section."""
        assert build_overrides("online_vpo", feedback="per_frame")["vpo"]["feedback"] == "per_frame"


class TestRunCommands:
    """Experiments launched from the command line."""

    def test_online_vpo(self, tiny_config, tmp_path):
        """Test an online VPO run from the command line with K=1."""
        out = tmp_path / "out"
        result = runner.invoke(app, [
            "run", "online-vpo", "--config", str(tiny_config), "--out", str(out),
            "--seed", "1", "--seed", "2", "-k", "1",
        ])
        assert result.exit_code == 0, result.output
        summary = json.loads((out / "summary.json").read_text())
        online = [r for r in summary["runs"] if r["label"] == "online_vpo"]
        assert [r["seed"] for r in online] == [1, 2]
        assert all(r["reference_updates"] == [1, 2] for r in online)
        config = json.loads((out / "config.json").read_text())
        assert config["vpo"]["k_interval"] == 1

    def test_report_after_run(self, tiny_config, tmp_path):
        """Test the report command renders a finished run."""
        out = tmp_path / "out"
        runner.invoke(app, ["run", "refl", "-c", str(tiny_config), "-o", str(out), "-s", "0"])
        result = runner.invoke(app, ["report", str(out)])
        assert result.exit_code == 0, result.output
        assert "refl" in result.stdout

    def test_bad_dimension(self, tiny_config, tmp_path):
        """Test an unknown reward dimension exits before creating output."""
        result = runner.invoke(app, [
            "run", "online-vpo", "-c", str(tiny_config), "-o", str(tmp_path / "out"), "-d", "sharpness",
        ])
        assert result.exit_code == 1
        assert not (tmp_path / "out").exists()

    def test_bad_feedback(self, tiny_config, tmp_path):
        """Test an unknown feedback source exits before creating output."""
        result = runner.invoke(app, [
            "run", "online-vpo", "-c", str(tiny_config), "-o", str(tmp_path / "out"), "-f", "pixels",
        ])
        assert result.exit_code == 1
        assert not (tmp_path / "out").exists()

    def test_per_frame_run(self, tiny_config, tmp_path):
        """Test an online run with per-frame feedback records it in config.json."""
        out = tmp_path / "out"
        result = runner.invoke(app, [
            "run", "online-vpo", "-c", str(tiny_config), "-o", str(out), "-s", "0", "-f", "per_frame",
        ])
        assert result.exit_code == 0, result.output
        config = json.loads((out / "config.json").read_text())
        assert config["vpo"]["feedback"] == "per_frame"

    def test_bad_config_file(self, tmp_path):
        """Test an unreadable config file exits with an error."""
        path = tmp_path / "bad.json"
        path.write_text("{broken")
        result = runner.invoke(app, ["run", "pretrain", "-c", str(path), "-o", str(tmp_path / "out")])
        assert result.exit_code == 1

    def test_sweep_without_parameter(self, tiny_config, tmp_path):
        """Test a sweep needs a parameter to sweep."""
        result = runner.invoke(app, ["run", "sweep", "-c", str(tiny_config), "-o", str(tmp_path / "out")])
        assert result.exit_code == 1

    def test_report_missing_directory(self, tmp_path):
        """Test the report command on a directory without a summary."""
        result = runner.invoke(app, ["report", str(tmp_path / "absent")])
        assert result.exit_code == 1
