"""Tests for the episode state machine."""

import numpy as np
import pytest

from crowd_safety_navigator.config import ScenarioConfig
from crowd_safety_navigator.errors import EpisodeTerminatedError, InputValidationError
from crowd_safety_navigator.simulation.scenario import spawn_scenario
from crowd_safety_navigator.simulation.state import Event, RobotState, clamp_velocity
from crowd_safety_navigator.simulation.world import (
    classify_event,
    compute_human_velocities,
    count_human_contacts,
    rollout_humans,
    step_episode,
)


@pytest.mark.parametrize(
    "v, v_max, expected",
    [
        ((0.6, 0.8), 1.0, (0.6, 0.8)),
        ((3.0, 4.0), 1.0, (0.6, 0.8)),
        ((0.0, 0.0), 2.5, (0.0, 0.0)),
    ],
)
def test_clamp_velocity(v, v_max, expected):
    np.testing.assert_allclose(clamp_velocity(np.array(v), v_max), expected, atol=1e-12)


def test_clamp_velocity_rejects_non_positive_limit():
    with pytest.raises(InputValidationError):
        clamp_velocity(np.array([1.0, 0.0]), 0.0)


def test_step_moves_robot_by_euler_step(make_world):
    world = make_world(robot_goal=(1.0, 0.0))

    transition = step_episode(world, np.array([1.0, 0.0]))

    np.testing.assert_allclose(world.robot.position, [0.25, 0.0])
    assert transition.robot_displacement_toward_goal == pytest.approx(0.25)
    assert transition.event is Event.RUNNING
    assert world.step_index == 1
    assert world.clock == pytest.approx(0.25)


def test_step_clamps_robot_action(make_world):
    world = make_world(robot_goal=(10.0, 0.0))

    step_episode(world, np.array([3.0, 4.0]))

    np.testing.assert_allclose(world.robot.velocity, [0.6, 0.8])
    np.testing.assert_allclose(world.robot.position, [0.15, 0.2])


def test_robot_on_goal_reaches_goal(make_world):
    world = make_world(robot_position=(1.0, 0.0), robot_goal=(1.0, 0.0))

    transition = step_episode(world, np.zeros(2))

    assert transition.event is Event.REACHED_GOAL
    assert world.terminated


def test_overlap_with_human_is_collision(make_world):
    # Human standing on its own goal keeps still for the step.
    world = make_world(humans=[{"position": (0.3, 0.0), "radius": 0.3, "goal": (0.3, 0.0)}])

    transition = step_episode(world, np.zeros(2))

    assert transition.event is Event.COLLISION


def test_collision_takes_precedence_over_goal(make_world):
    world = make_world(
        robot_position=(1.0, 0.0),
        robot_goal=(1.0, 0.0),
        humans=[{"position": (1.2, 0.0), "radius": 0.3, "goal": (1.2, 0.0)}],
    )

    assert step_episode(world, np.zeros(2)).event is Event.COLLISION


def test_timeout_after_time_limit(make_world):
    config = ScenarioConfig(human_count=0, time_limit=0.5)
    world = make_world(robot_goal=(10.0, 0.0), config=config)

    assert step_episode(world, np.zeros(2)).event is Event.RUNNING
    assert step_episode(world, np.zeros(2)).event is Event.TIMEOUT
    assert world.step_index == config.max_steps == 2


def test_default_step_budget():
    assert ScenarioConfig().max_steps == 200


def test_stepping_terminated_episode_raises(make_world):
    world = make_world(robot_position=(1.0, 0.0), robot_goal=(1.0, 0.0))
    step_episode(world, np.zeros(2))

    with pytest.raises(EpisodeTerminatedError):
        step_episode(world, np.zeros(2))


@pytest.mark.parametrize("action", [np.array([np.nan, 0.0]), np.array([np.inf, 1.0]), np.array([1.0, 0.0, 0.0])])
def test_invalid_action_rejected(make_world, action):
    world = make_world()

    with pytest.raises(InputValidationError):
        step_episode(world, action)


def test_classify_running_world(make_world):
    assert classify_event(make_world()) is Event.RUNNING


def test_human_contacts_are_counted_not_terminal(make_world):
    world = make_world(
        robot_goal=(-4.0, 0.0),
        humans=[
            {"position": (3.0, 3.0), "radius": 0.3, "goal": (3.0, 3.0)},
            {"position": (3.4, 3.0), "radius": 0.3, "goal": (3.4, 3.0)},
        ],
    )

    assert count_human_contacts(world) == 1
    transition = step_episode(world, np.zeros(2))
    assert transition.event is Event.RUNNING
    assert transition.human_contacts >= 0


def test_identical_seed_and_actions_are_bit_identical(default_scenario):
    actions = np.random.default_rng(7).uniform(-1.0, 1.0, size=(30, 2))
    runs = []
    for _ in range(2):
        world = spawn_scenario(default_scenario, seed=11)
        positions = []
        for action in actions:
            if world.terminated:
                break
            step_episode(world, action)
            positions.append(np.concatenate([world.robot.position, world.human_positions.ravel()]))
        runs.append(np.stack(positions))

    assert runs[0].shape == runs[1].shape
    assert np.array_equal(runs[0], runs[1])


def test_speed_bound_holds_every_step(default_scenario):
    world = spawn_scenario(default_scenario, seed=3)
    for _ in range(40):
        if world.terminated:
            break
        step_episode(world, np.array([0.0, 0.5]))
        for human in world.humans:
            assert np.linalg.norm(human.velocity) <= human.max_speed + 1e-9
        assert np.linalg.norm(world.robot.velocity) <= world.robot.max_speed + 1e-9


def test_invisible_robot_does_not_affect_humans(default_scenario):
    world = spawn_scenario(default_scenario, seed=5)
    moved = world.copy()
    moved.robot = RobotState(
        position=world.robot.position + np.array([0.7, -0.4]),
        velocity=np.array([1.0, 0.0]),
        goal=world.robot.goal,
        radius=world.robot.radius,
        max_speed=world.robot.max_speed,
    )

    for a, b in zip(compute_human_velocities(world), compute_human_velocities(moved)):
        np.testing.assert_array_equal(a, b)


def test_rollout_humans_leaves_world_untouched(default_scenario):
    world = spawn_scenario(default_scenario, seed=2)
    before = world.human_positions.copy()
    draw_before = world.copy().rng.random()

    future = rollout_humans(world, 3)

    assert future.shape == (3, default_scenario.human_count, 2)
    np.testing.assert_array_equal(world.human_positions, before)
    assert world.step_index == 0
    assert world.rng.random() == draw_before


def test_rollout_humans_truncates_at_episode_end(make_world):
    config = ScenarioConfig(human_count=1, time_limit=0.5)
    world = make_world(humans=[{"position": (2.0, 2.0)}], config=config)

    assert rollout_humans(world, 5).shape == (2, 1, 2)
