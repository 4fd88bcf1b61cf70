"""Tests for CLI interface."""

import json
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
import pytest
from typer.testing import CliRunner

from crowd_safety_navigator import __version__
from crowd_safety_navigator.cli import app
from crowd_safety_navigator.config import DtaciConfig, MpcConfig, PolicyConfig, SafetyCostConfig, TrainingVariant
from crowd_safety_navigator.errors import TrainingDivergedError
from crowd_safety_navigator.learning.checkpoint import save_checkpoint
from crowd_safety_navigator.learning.network import init_policy_params
from crowd_safety_navigator.metrics.bench import compute_metrics
from crowd_safety_navigator.metrics.trace import write_trace

runner = CliRunner()


@pytest.fixture
def small_scenario(tmp_path) -> Path:
    path = tmp_path / "small.json"
    path.write_text(json.dumps({"arena": [8.0, 8.0], "human_count": 2, "time_limit": 5.0}))
    return path


@pytest.fixture
def trace_file(tmp_path, make_trace) -> Path:
    trace = make_trace([[0.2 * (i + 1), 0.0] for i in range(8)], human_path=[[[2.0, 2.0]]] * 8)
    return write_trace(trace, tmp_path / "episode_000.jsonl")


def test_cli_help():
    """Test CLI help command."""
    result = runner.invoke(app, ["--help"])

    assert result.exit_code == 0
    assert "simulate" in result.stdout
    assert "evaluate" in result.stdout


def test_cli_version():
    """Test CLI version command."""
    result = runner.invoke(app, ["version"])

    assert result.exit_code == 0
    assert f"v{__version__}" in result.stdout


def test_simulate_writes_traces_and_manifest(small_scenario, tmp_path):
    """Test simulate writes one trace per episode plus a manifest."""
    out = tmp_path / "sim"

    result = runner.invoke(
        app, ["simulate", "--scenario", str(small_scenario), "--policy", "orca", "--episodes", "2", "--out", str(out)]
    )

    assert result.exit_code == 0, result.stdout
    assert (out / "episode_000.jsonl").exists()
    assert (out / "episode_001.jsonl").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["code_version"] == __version__
    assert len(manifest["seeds"]) == 2
    assert len(manifest["outputs"]) == 2


def test_simulate_unknown_policy(small_scenario, tmp_path):
    """Test CLI rejects an unknown policy name."""
    result = runner.invoke(app, ["simulate", "--scenario", str(small_scenario), "--policy", "rrt", "--out", str(tmp_path)])

    assert result.exit_code == 2
    assert not (tmp_path / "manifest.json").exists()


def test_simulate_malformed_scenario(tmp_path):
    """Test CLI rejects a scenario with unknown fields."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"human_count": 3, "crowd_mood": "grumpy"}))

    result = runner.invoke(app, ["simulate", "--scenario", str(path), "--out", str(tmp_path / "out")])

    assert result.exit_code == 2


def test_simulate_nonexistent_scenario(tmp_path):
    """Test CLI with non-existent scenario file."""
    result = runner.invoke(app, ["simulate", "--scenario", str(tmp_path / "missing.json")])

    assert result.exit_code != 0


@pytest.fixture
def checkpoint_file(tmp_path) -> Path:
    params = init_policy_params(PolicyConfig(encoder_width=4, hidden_widths=(6, 5)), np.random.default_rng(0))
    return save_checkpoint(tmp_path / "ours_seed0" / "checkpoint.json", params, TrainingVariant.OURS, "0" * 64, 2)


def test_simulate_manifest_records_resolved_configs(small_scenario, tmp_path):
    """Test the simulate manifest carries every config the run used."""
    out = tmp_path / "sim"

    result = runner.invoke(app, ["simulate", "--scenario", str(small_scenario), "--policy", "orca", "--out", str(out)])

    assert result.exit_code == 0, result.stdout
    config = json.loads((out / "manifest.json").read_text())["config"]
    assert config["policy"] == "orca"
    assert config["scenario"]["human_count"] == 2
    assert config["dtaci"] == DtaciConfig().model_dump(mode="json")
    assert config["cost"] == SafetyCostConfig().model_dump(mode="json")
    assert config["mpc"] == MpcConfig().model_dump(mode="json")


def test_simulate_with_checkpoint_option(small_scenario, checkpoint_file, tmp_path):
    """Test --checkpoint runs the trained policy."""
    out = tmp_path / "sim"

    result = runner.invoke(
        app, ["simulate", "--scenario", str(small_scenario), "--checkpoint", str(checkpoint_file), "--out", str(out)]
    )

    assert result.exit_code == 0, result.stdout
    assert (out / "episode_000.jsonl").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["policy"] == f"checkpoint:{checkpoint_file}"


def test_simulate_rejects_policy_and_checkpoint(small_scenario, checkpoint_file, tmp_path):
    """Test --policy and --checkpoint are mutually exclusive."""
    result = runner.invoke(
        app,
        ["simulate", "-s", str(small_scenario), "-p", "mpc", "--checkpoint", str(checkpoint_file), "-o", str(tmp_path)],
    )

    assert result.exit_code == 2


def test_simulate_missing_checkpoint(small_scenario, tmp_path):
    """Test CLI with non-existent checkpoint file."""
    result = runner.invoke(
        app, ["simulate", "-s", str(small_scenario), "--checkpoint", str(tmp_path / "missing.json"), "-o", str(tmp_path)]
    )

    assert result.exit_code == 2


@patch("crowd_safety_navigator.cli.train_policy")
def test_train_success(mock_train, tmp_path):
    """Test successful training run writes a manifest listing its outputs."""
    checkpoint, curves = tmp_path / "checkpoint.json", tmp_path / "curves.csv"
    mock_train.return_value = MagicMock(checkpoint_path=checkpoint, curves_path=curves, lagrange_multiplier=0.25)

    result = runner.invoke(app, ["train", "--cost-limit", "0.3", "--seed", "7", "--steps", "2048", "--out", str(tmp_path)])

    assert result.exit_code == 0, result.stdout
    _, kwargs = mock_train.call_args
    assert kwargs["seed"] == 7
    assert mock_train.call_args.args[1].cost_limit == 0.3
    assert mock_train.call_args.args[1].total_steps == 2048
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seeds"] == [7]
    assert manifest["outputs"] == [str(checkpoint), str(curves)]


@patch("crowd_safety_navigator.cli.train_policy")
def test_train_divergence_exits_nonzero(mock_train, tmp_path):
    """Test a diverged run reports its diagnostic dump."""
    mock_train.side_effect = TrainingDivergedError("loss is nan", dump_path=tmp_path / "divergence_dump.json")

    result = runner.invoke(app, ["train", "--out", str(tmp_path)])

    assert result.exit_code == 1
    assert "Diagnostic dump" in result.stdout


def test_train_rejects_negative_cost_limit(tmp_path):
    """Test cost limit must be non-negative."""
    result = runner.invoke(app, ["train", "--cost-limit", "-1", "--out", str(tmp_path)])

    assert result.exit_code == 2


@patch("crowd_safety_navigator.cli.run_campaign")
def test_evaluate_writes_metrics(mock_campaign, tmp_path, make_trace):
    """Test evaluate saves the metrics table and manifest."""
    mock_campaign.return_value = {"in_distribution": compute_metrics([make_trace([[1.0, 0.0]])])}

    result = runner.invoke(
        app, ["evaluate", "--policy", "orca", "--ood", "rushing", "--episodes", "3", "--seeds", "2", "--out", str(tmp_path)]
    )

    assert result.exit_code == 0, result.stdout
    policies, variants, campaign = mock_campaign.call_args.args[:3]
    assert policies == ["orca"]
    assert list(variants) == ["in_distribution", "rushing"]
    assert campaign.test_seeds == [0, 1]
    assert (tmp_path / "metrics.csv").read_text().startswith("variant,SR,CR,TR")
    assert json.loads((tmp_path / "manifest.json").read_text())["seeds"] == [0, 1]


@patch("crowd_safety_navigator.cli.run_campaign")
def test_evaluate_interrupted(mock_campaign, tmp_path):
    """Test Ctrl-C exits with the conventional status."""
    mock_campaign.side_effect = KeyboardInterrupt

    result = runner.invoke(app, ["evaluate", "--policy", "sf", "--out", str(tmp_path)])

    assert result.exit_code == 130


@patch("crowd_safety_navigator.cli.run_campaign")
def test_evaluate_repeated_checkpoint_option(mock_campaign, tmp_path, make_trace):
    """Test each --checkpoint becomes one policy, after any --policy values."""
    mock_campaign.return_value = {"in_distribution": compute_metrics([make_trace([[1.0, 0.0]])])}
    first, second = tmp_path / "s0.json", tmp_path / "s1.json"
    first.write_text("{}")
    second.write_text("{}")

    result = runner.invoke(
        app,
        ["evaluate", "-p", "orca", "--checkpoint", str(first), "--checkpoint", str(second), "--out", str(tmp_path / "ev")],
    )

    assert result.exit_code == 0, result.stdout
    assert mock_campaign.call_args.args[0] == ["orca", f"checkpoint:{first}", f"checkpoint:{second}"]
    manifest = json.loads((tmp_path / "ev" / "manifest.json").read_text())
    assert manifest["config"]["policies"] == ["orca", f"checkpoint:{first}", f"checkpoint:{second}"]
    assert manifest["config"]["mpc"] == MpcConfig().model_dump(mode="json")


def test_evaluate_requires_a_policy(tmp_path):
    """Test evaluate with neither --policy nor --checkpoint."""
    result = runner.invoke(app, ["evaluate", "--out", str(tmp_path)])

    assert result.exit_code == 2


def test_evaluate_invalid_policy(tmp_path):
    """Test CLI with invalid policy spec."""
    result = runner.invoke(app, ["evaluate", "--policy", "checkpoint:", "--out", str(tmp_path)])

    assert result.exit_code == 2


def test_evaluate_invalid_format(tmp_path):
    """Test CLI with invalid format."""
    result = runner.invoke(app, ["evaluate", "--policy", "orca", "--format", "xml", "--out", str(tmp_path)])

    assert result.exit_code == 2


def test_calibrate_reports_coverage(trace_file, tmp_path):
    """Test calibrate writes per-horizon coverage and the error series."""
    out = tmp_path / "cal"

    result = runner.invoke(app, ["calibrate", "--trace", str(trace_file), "--errors-out", "--out", str(out)])

    assert result.exit_code == 0, result.stdout
    lines = (out / "coverage.csv").read_text().splitlines()
    assert lines[0] == "horizon,coverage,samples"
    assert len(lines) == 6
    assert (out / "aci_errors.csv").exists()


def test_calibrate_rejects_alpha_zero(trace_file, tmp_path):
    """Test miscoverage level must lie strictly inside (0, 1)."""
    result = runner.invoke(app, ["calibrate", "--trace", str(trace_file), "--alpha", "0", "--out", str(tmp_path)])

    assert result.exit_code == 2


def test_calibrate_malformed_trace(tmp_path):
    """Test calibrate fails cleanly on a trace without header."""
    path = tmp_path / "broken.jsonl"
    path.write_text("{not json\n")

    result = runner.invoke(app, ["calibrate", "--trace", str(path), "--out", str(tmp_path / "cal")])

    assert result.exit_code == 1


def test_render_writes_frames(trace_file, tmp_path):
    """Test render writes one SVG per step."""
    out = tmp_path / "frames"

    result = runner.invoke(app, ["render", "--trace", str(trace_file), "--out", str(out)])

    assert result.exit_code == 0, result.stdout
    assert len(list(out.glob("frame_*.svg"))) == 8
