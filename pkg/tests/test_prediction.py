"""Tests for the trajectory predictors."""

import numpy as np
import pytest

from crowd_safety_navigator.config import ScenarioConfig
from crowd_safety_navigator.errors import InputValidationError
from crowd_safety_navigator.simulation.world import rollout_humans, step_episode
from crowd_safety_navigator.uncertainty.prediction import (
    ConstantVelocityPredictor,
    NoisyOraclePredictor,
    PredictionSet,
    build_predictor,
    cv_predict,
    noisy_oracle_predict,
)


def test_cv_extrapolates_linearly(make_world):
    world = make_world(humans=[{"position": (1.0, 1.0), "velocity": (1.0, 0.0)}])

    prediction = cv_predict(world, 2)

    np.testing.assert_allclose(prediction.points[0], [[1.25, 1.0], [1.5, 1.0]])
    assert prediction.issued_at == 0
    assert prediction.horizon == 2


def test_cv_stationary_human_stays_put(make_world):
    world = make_world(humans=[{"position": (-2.0, 3.0)}])

    np.testing.assert_allclose(cv_predict(world, 5).points[0], np.tile([-2.0, 3.0], (5, 1)))


def test_cv_is_translation_equivariant(make_world):
    humans = [{"position": (1.0, 0.0), "velocity": (0.3, -0.2)}, {"position": (-1.0, 2.0), "velocity": (0.0, 0.5)}]
    shift = np.array([2.5, -1.5])
    shifted = [{**h, "position": tuple(np.asarray(h["position"]) + shift)} for h in humans]

    base = cv_predict(make_world(humans=humans), 5).points
    moved = cv_predict(make_world(humans=shifted), 5).points

    np.testing.assert_allclose(moved, base + shift)


def test_cv_first_step_matches_world_step(make_world):
    world = make_world(humans=[{"position": (1.0, 1.0), "velocity": (1.0, 0.0), "goal": (9.0, 1.0)}])
    predicted = cv_predict(world, 1).points[0, 0]

    step_episode(world, np.zeros(2))

    np.testing.assert_allclose(world.humans[0].position, predicted)


def test_cv_rejects_zero_horizon(make_world):
    with pytest.raises(InputValidationError):
        cv_predict(make_world(humans=[{"position": (0.0, 1.0)}]), 0)


def test_zero_noise_oracle_is_exact(make_world):
    world = make_world(humans=[{"position": (0.0, 1.0), "velocity": (0.5, 0.0)}])
    future = rollout_humans(world, 5)

    prediction = noisy_oracle_predict(world, 5, future, 0.0, np.random.default_rng(0))

    np.testing.assert_array_equal(prediction.points, np.transpose(future, (1, 0, 2)))


def test_oracle_noise_spread(make_world):
    count = 2000
    config = ScenarioConfig(human_count=count)
    world = make_world(humans=[{"position": (0.0, 0.0)}] * count, config=config)
    future = np.zeros((5, count, 2))

    prediction = noisy_oracle_predict(world, 5, future, 0.2, np.random.default_rng(3))

    radial = np.linalg.norm(prediction.points, axis=-1).ravel()
    assert radial.size == 10_000
    assert np.sqrt(np.mean(radial**2)) == pytest.approx(0.2 * np.sqrt(2.0), rel=0.03)
    assert np.mean(radial) == pytest.approx(0.2 * np.sqrt(np.pi / 2.0), rel=0.03)


def test_oracle_rejects_short_future(make_world):
    world = make_world(humans=[{"position": (0.0, 1.0)}])

    with pytest.raises(InputValidationError):
        noisy_oracle_predict(world, 5, np.zeros((3, 1, 2)), 0.1, np.random.default_rng(0))


def test_oracle_predictor_pads_at_episode_end(make_world):
    config = ScenarioConfig(human_count=1, time_limit=0.5)
    world = make_world(humans=[{"position": (0.0, 1.0), "velocity": (1.0, 0.0)}], config=config)

    prediction = NoisyOraclePredictor(noise_scale=0.0).predict(world, 5)

    assert prediction.points.shape == (1, 5, 2)
    np.testing.assert_array_equal(prediction.points[0, 2:], np.tile(prediction.points[0, 1], (3, 1)))


def test_prediction_set_rejects_non_finite():
    with pytest.raises(InputValidationError):
        PredictionSet(points=np.full((1, 2, 2), np.nan), issued_at=0)


def test_build_predictor_by_name():
    assert isinstance(build_predictor("cv"), ConstantVelocityPredictor)
    oracle = build_predictor("noisy_oracle", noise_scale=0.3, seed=4)
    assert isinstance(oracle, NoisyOraclePredictor)
    assert oracle.noise_scale == 0.3

    with pytest.raises(InputValidationError):
        build_predictor("gst")
