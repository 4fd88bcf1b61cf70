"""Tests for scenario generation, goal resampling and OOD variants."""

import itertools
import json

import numpy as np
import pytest

from crowd_safety_navigator.config import (
    Behavior,
    GoalResampleSpec,
    GroupSpec,
    OodVariant,
    ScenarioConfig,
    load_scenario,
)
from crowd_safety_navigator.errors import InputValidationError, ScenarioError
from crowd_safety_navigator.simulation.scenario import (
    make_ood_variant,
    resample_goals,
    rushing_count,
    spawn_scenario,
)


@pytest.mark.parametrize("seed", [0, 1, 17, 123])
def test_default_spawn_is_non_overlapping(default_scenario, seed):
    world = spawn_scenario(default_scenario, seed)

    assert world.human_count == 20
    radii = world.human_radii
    assert np.all((radii >= 0.3) & (radii <= 0.5))
    positions = world.human_positions
    for i, j in itertools.combinations(range(world.human_count), 2):
        assert np.linalg.norm(positions[i] - positions[j]) > radii[i] + radii[j] + default_scenario.spawn_margin
    for human in world.humans:
        assert abs(human.position[0]) <= 6.0 - human.radius
        assert abs(human.position[1]) <= 6.0 - human.radius


def test_robot_start_and_goal_are_far_apart(default_scenario):
    for seed in range(10):
        world = spawn_scenario(default_scenario, seed)
        assert np.linalg.norm(world.robot.goal - world.robot.position) >= 6.0
        np.testing.assert_array_equal(world.robot.velocity, [0.0, 0.0])


def test_spawn_is_deterministic(default_scenario):
    a = spawn_scenario(default_scenario, 42)
    b = spawn_scenario(default_scenario, 42)

    np.testing.assert_array_equal(a.human_positions, b.human_positions)
    np.testing.assert_array_equal(a.robot.goal, b.robot.goal)


def test_rushing_variant_speeds_up_four_of_twenty(default_scenario):
    world = spawn_scenario(make_ood_variant(default_scenario, OodVariant.RUSHING), seed=9)

    speeds = np.array([human.max_speed for human in world.humans])
    assert np.count_nonzero(speeds == 2.0) == 4
    assert np.count_nonzero(speeds == 1.0) == 16


@pytest.mark.parametrize("count, expected", [(20, 4), (5, 1), (3, 1), (2, 0), (0, 0)])
def test_rushing_count_rounds_half_up(count, expected):
    assert rushing_count(count, 0.2) == expected


def test_empty_crowd_spawns_robot_only():
    world = spawn_scenario(ScenarioConfig(human_count=0), seed=0)

    assert world.human_count == 0
    assert world.human_positions.shape == (0, 2)


def test_overfull_arena_raises_scenario_error():
    with pytest.raises(ScenarioError):
        spawn_scenario(ScenarioConfig(arena=(1.0, 1.0), human_count=10), seed=0)


def test_groups_share_leader_goal_with_offsets(default_scenario):
    world = spawn_scenario(make_ood_variant(default_scenario, OodVariant.GROUPS), seed=4)

    assert world.human_count == 20
    leaders = {h.group_id: h for h in world.humans if h.group_id is not None and not h.is_group_member}
    members = [h for h in world.humans if h.is_group_member]
    assert leaders and members
    for member in members:
        np.testing.assert_allclose(member.goal, leaders[member.group_id].goal + member.goal_offset)


def test_group_sizes_within_range():
    config = ScenarioConfig(human_count=12, grouping=GroupSpec(group_size_range=(2, 3)))
    world = spawn_scenario(config, seed=8)

    sizes = {}
    for human in world.humans:
        if human.group_id is not None:
            sizes[human.group_id] = sizes.get(human.group_id, 0) + 1
    assert all(2 <= size <= 3 for size in sizes.values())


def test_group_size_range_validated():
    with pytest.raises(ValueError):
        GroupSpec(group_size_range=(1, 3))


def test_off_period_step_keeps_goals(make_world):
    world = make_world(humans=[{"position": (1.0, 1.0)}, {"position": (-1.0, -1.0)}], step_index=3)
    goals = [human.goal.copy() for human in world.humans]

    resample_goals(world, np.random.default_rng(0))

    for human, goal in zip(world.humans, goals):
        np.testing.assert_array_equal(human.goal, goal)


def test_certain_resampling_replaces_every_goal(make_world):
    config = ScenarioConfig(human_count=3, goal_resample=GoalResampleSpec(probability=1.0))
    humans = [{"position": (float(i), 0.0), "goal": (9.0, 9.0)} for i in range(3)]
    world = make_world(humans=humans, config=config, step_index=5)

    resample_goals(world, np.random.default_rng(1))

    for human in world.humans:
        assert not np.array_equal(human.goal, [9.0, 9.0])
        assert abs(human.goal[0]) <= 6.0 and abs(human.goal[1]) <= 6.0


def test_resampled_fraction_concentrates_at_half(make_world):
    count = 10_000
    config = ScenarioConfig(human_count=count)
    humans = [{"position": (0.0, 0.0), "goal": (99.0, 99.0)} for _ in range(count)]
    world = make_world(humans=humans, config=config, step_index=5)

    resample_goals(world, np.random.default_rng(2))

    changed = sum(1 for human in world.humans if not np.array_equal(human.goal, [99.0, 99.0]))
    assert 0.48 <= changed / count <= 0.52


def test_ood_rushing_fields(default_scenario):
    variant = make_ood_variant(default_scenario, OodVariant.RUSHING)

    assert variant.rushing_fraction == 0.2
    assert variant.rushing_vmax == 2.0


def test_ood_sf_flips_behavior_only(default_scenario):
    variant = make_ood_variant(default_scenario, "sf")

    assert variant.behavior is Behavior.SOCIAL_FORCE
    before = default_scenario.model_dump()
    after = variant.model_dump()
    before.pop("behavior")
    after.pop("behavior")
    assert before == after


def test_ood_groups_keeps_human_count(default_scenario):
    variant = make_ood_variant(default_scenario, OodVariant.GROUPS)

    assert variant.grouping is not None
    assert variant.human_count == default_scenario.human_count


def test_bundled_scenarios_match_presets(scenario_dir):
    assert load_scenario(scenario_dir / "default.json") == ScenarioConfig()
    assert load_scenario(scenario_dir / "desk.json") == ScenarioConfig.desk()


def test_malformed_scenario_file_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"human_count": -3}))

    with pytest.raises(InputValidationError):
        load_scenario(path)


def test_unknown_scenario_field_rejected(tmp_path):
    path = tmp_path / "typo.json"
    path.write_text(json.dumps({"humans": 5}))

    with pytest.raises(InputValidationError):
        load_scenario(path)
