"""
Unit tests for the click command-line interface
"""

import json
import os

import pandas as pd
from click.testing import CliRunner

from src import config
from src.cli import cli

FAST_FLAGS = [
    "--dataset", "synthetic",
    "--clients", "30",
    "--rounds", "3",
    "--sample-rate", "0.2",
    "--batch", "16",
    "--attack-start", "1",
    "--no-progress",
]


class TestRunCommand:
    """Test cases for `run`"""

    def test_run_writes_outputs(self, tmp_path):
        out = tmp_path / "run"
        result = CliRunner().invoke(cli, ["run", *FAST_FLAGS, "--defense", "cos_defense", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "final_accuracy=" in result.output
        frame = pd.read_csv(out / config.ROUNDS_CSV)
        assert len(frame) == 3
        manifest = json.loads((out / config.MANIFEST_JSON).read_text())
        assert manifest["config"]["num_clients"] == 30

    def test_config_file_and_flag_precedence(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"q": 0.3, "seed": 4}))
        out = tmp_path / "run"
        result = CliRunner().invoke(
            cli, ["run", "--config", str(path), *FAST_FLAGS, "--q", "0.5", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / config.MANIFEST_JSON).read_text())
        assert manifest["config"]["q"] == 0.5
        assert manifest["config"]["seed"] == 4

    def test_include_bias_flag(self, tmp_path):
        out = tmp_path / "run"
        result = CliRunner().invoke(cli, ["run", *FAST_FLAGS, "--include-bias", "--out", str(out)])
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / config.MANIFEST_JSON).read_text())
        assert manifest["config"]["cos_include_bias"] is True

    def test_invalid_q_is_rejected(self, tmp_path):
        result = CliRunner().invoke(cli, ["run", "--q", "0.05", "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "q" in result.output

    def test_missing_data_dir(self, tmp_path):
        result = CliRunner().invoke(
            cli, ["run", "--dataset", "mnist", "--data-dir", str(tmp_path / "none"), "--out", str(tmp_path)]
        )
        assert result.exit_code == 1
        assert "not found" in result.output

    def test_sweep(self, tmp_path):
        out = tmp_path / "sweep"
        result = CliRunner().invoke(
            cli,
            ["run", *FAST_FLAGS, "--sweep", "q", "--sweep-defenses", "cos_defense,median", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        summary = pd.read_csv(out / config.SWEEP_CSV)
        assert len(summary) == len(config.SWEEP_AXES["q"]) * 2

    def test_epsilon_sweep(self, tmp_path):
        out = tmp_path / "sweep"
        result = CliRunner().invoke(
            cli,
            ["run", *FAST_FLAGS, "--sweep", "ipm_eps", "--sweep-defenses", "none", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        summary = pd.read_csv(out / config.SWEEP_CSV)
        assert summary["value"].tolist() == config.SWEEP_AXES["ipm_eps"]


class TestOtherCommands:
    """Test cases for `replay` and `layer-similarity`"""

    def test_replay(self, tmp_path):
        out = tmp_path / "run"
        runner = CliRunner()
        assert runner.invoke(cli, ["run", *FAST_FLAGS, "--out", str(out)]).exit_code == 0
        replay_out = tmp_path / "replay"
        result = runner.invoke(cli, ["replay", str(out / config.MANIFEST_JSON), "--out", str(replay_out)])
        assert result.exit_code == 0, result.output
        assert (out / config.ROUNDS_CSV).read_bytes() == (replay_out / config.ROUNDS_CSV).read_bytes()

    def test_layer_similarity(self, tmp_path):
        out = tmp_path / "similarity"
        result = CliRunner().invoke(
            cli,
            [
                "layer-similarity",
                "--dataset", "synthetic",
                "--iters", "4",
                "--sample-every", "2",
                "--out", str(out),
                "--no-progress",
            ],
        )
        assert result.exit_code == 0, result.output
        assert os.path.exists(out / config.SIMILARITY_CSV)
