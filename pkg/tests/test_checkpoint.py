"""Tests for policy checkpoints."""

import json

import numpy as np
import pytest

from crowd_safety_navigator.config import PolicyConfig, TrainingVariant
from crowd_safety_navigator.errors import CheckpointError
from crowd_safety_navigator.learning.checkpoint import load_checkpoint, save_checkpoint
from crowd_safety_navigator.learning.network import init_policy_params

ZERO_HASH = "0" * 64

SMALL = PolicyConfig(encoder_width=4, hidden_widths=(6, 5), horizon=2)


@pytest.fixture
def saved(tmp_path):
    params = init_policy_params(SMALL, np.random.default_rng(3))
    path = save_checkpoint(
        tmp_path / "run" / "checkpoint.json",
        params,
        TrainingVariant.RL_ACI,
        ZERO_HASH,
        max_humans=5,
        metadata={"seed": 3},
    )
    return path, params


def test_saved_checkpoint_restores_parameters(saved):
    path, params = saved

    checkpoint = load_checkpoint(path)

    assert checkpoint.variant is TrainingVariant.RL_ACI
    assert checkpoint.max_humans == 5
    assert checkpoint.config_hash == ZERO_HASH
    assert checkpoint.metadata == {"seed": 3}
    assert checkpoint.params.config == SMALL
    assert set(checkpoint.params.arrays) == set(params.arrays)
    for key, value in params.arrays.items():
        np.testing.assert_array_equal(checkpoint.params.arrays[key], value)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "absent.json")


def test_unreadable_checkpoint(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")

    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_other_format_version_rejected(saved):
    path, _ = saved
    payload = json.loads(path.read_text())
    payload["format_version"] = 99
    path.write_text(json.dumps(payload))

    with pytest.raises(CheckpointError, match="format_version"):
        load_checkpoint(path)


def test_shape_mismatch_rejected(saved):
    path, _ = saved
    payload = json.loads(path.read_text())
    payload["params"]["actor.mean_b"] = [0.0, 0.0, 0.0]
    path.write_text(json.dumps(payload))

    with pytest.raises(CheckpointError, match="actor.mean_b"):
        load_checkpoint(path)


def test_missing_key_rejected(saved):
    path, _ = saved
    payload = json.loads(path.read_text())
    del payload["params"]["cost.value_b"]
    path.write_text(json.dumps(payload))

    with pytest.raises(CheckpointError, match="keys mismatch"):
        load_checkpoint(path)
