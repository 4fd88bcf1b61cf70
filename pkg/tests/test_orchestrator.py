"""Tests for the episode orchestrator."""

import os
from unittest.mock import patch

import numpy as np
import pytest

from crowd_safety_navigator.config import DtaciConfig, PolicyConfig, ScenarioConfig, TrainingVariant
from crowd_safety_navigator.errors import CrowdNavError, InputValidationError
from crowd_safety_navigator.learning.checkpoint import save_checkpoint
from crowd_safety_navigator.learning.network import init_policy_params
from crowd_safety_navigator.navigation_orchestrator import EpisodeRunner, replay_coverage
from crowd_safety_navigator.planners.policies import resolve_policy
from crowd_safety_navigator.uncertainty.dtaci import coverage_report

SHORT = ScenarioConfig.desk(human_count=2, time_limit=4.0)


def test_episode_runs_to_terminal_event():
    """Test runner rolls an episode and records one step per simulator step."""
    runner = EpisodeRunner(SHORT)

    trace = runner.run_episode(resolve_policy("orca"), seed=4)

    assert trace.outcome.is_terminal
    assert [step.step for step in trace.steps] == list(range(1, len(trace) + 1))
    assert all(not step.event.is_terminal for step in trace.steps[:-1])
    assert len(trace) <= SHORT.max_steps
    assert trace.header.seed == 4
    assert trace.header.human_count == 2
    assert trace.steps[0].predictions.shape == (2, 5, 2)
    assert trace.steps[0].uncertainty.shape == (2, 5)
    assert runner.last_coverage is runner.coverage[-1]


def test_same_seed_same_trace():
    """Test episodes replay exactly from their seed."""
    first = EpisodeRunner(SHORT).run_episode(resolve_policy("mpc"), seed=11)
    second = EpisodeRunner(SHORT).run_episode(resolve_policy("mpc"), seed=11)

    assert len(first) == len(second)
    np.testing.assert_array_equal(first.robot_positions, second.robot_positions)
    assert [step.cost for step in first.steps] == [step.cost for step in second.steps]


def test_record_predictions_flag_from_env_dict():
    """Test prediction grids can be left out of traces."""
    runner = EpisodeRunner(SHORT, env={"CROWDNAV_RECORD_PREDICTIONS": "false"})

    trace = runner.run_episode(resolve_policy("sf"), seed=1)

    assert runner.record_predictions is False
    assert all(step.predictions is None and step.uncertainty is None for step in trace.steps)


def test_strict_flag_from_process_environment():
    """Test feature flags are read from the process environment."""
    with patch.dict(os.environ, {"CROWDNAV_STRICT_VALIDATION": "true"}):
        runner = EpisodeRunner(SHORT)

    assert runner.strict_validation is True
    assert runner.validator.strict is True


def test_run_many_skips_failed_episodes():
    """Test runner handles episode errors gracefully."""
    runner = EpisodeRunner(SHORT)
    planner = resolve_policy("orca")
    good = runner.run_episode(planner, seed=0)

    with patch.object(runner, "run_episode", side_effect=[good, CrowdNavError("boom"), good]):
        traces = runner.run_many(planner, [0, 1, 2])

    assert traces == [good, good]


def test_run_many_strict_reraises():
    """Test strict runner stops at the first failed episode."""
    runner = EpisodeRunner(SHORT, env={"CROWDNAV_STRICT_VALIDATION": "true"})

    with patch.object(runner, "run_episode", side_effect=CrowdNavError("boom")):
        with pytest.raises(CrowdNavError):
            runner.run_many(resolve_policy("orca"), [0])


def test_policy_horizon_must_match_bank(tmp_path):
    """Test a learned policy trained on another horizon is refused."""
    params = init_policy_params(PolicyConfig(encoder_width=4, hidden_widths=(4, 4), horizon=3), np.random.default_rng(0))
    path = save_checkpoint(tmp_path / "checkpoint.json", params, TrainingVariant.OURS, "0" * 64, max_humans=2)
    runner = EpisodeRunner(SHORT, DtaciConfig())

    with pytest.raises(InputValidationError, match="prediction steps"):
        runner.run_episode(resolve_policy(f"checkpoint:{path}"), seed=0)


def test_replay_coverage_counts_resolved_predictions(make_trace):
    """Test replay scores every prediction whose target step was recorded."""
    still = [[[2.0, 2.0]]] * 6
    trace = make_trace([[0.1 * (i + 1), 0.0] for i in range(6)], human_path=still)

    coverage = replay_coverage(trace, DtaciConfig())

    pairs = coverage.pairs()
    assert {k: len(samples) for k, samples in pairs.items()} == {1: 6, 2: 5, 3: 4, 4: 3, 5: 2}
    # Stationary humans are predicted exactly.
    assert coverage_report(coverage) == {k: 1.0 for k in range(1, 6)}
