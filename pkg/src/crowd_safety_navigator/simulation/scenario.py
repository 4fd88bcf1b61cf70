"""Scenario generation, goal resampling and the out-of-distribution variant generators.

The arena is centred on the origin: x in [-width/2, width/2], y in [-height/2, height/2].
"""

import logging
import math
from dataclasses import replace

import numpy as np

from crowd_safety_navigator.config import Behavior, GroupSpec, OodVariant, ScenarioConfig
from crowd_safety_navigator.errors import ScenarioError
from crowd_safety_navigator.simulation.state import AgentState, RobotState, WorldState

logger = logging.getLogger(__name__)

MAX_PLACEMENT_ATTEMPTS = 1000
RUSHING_FRACTION = 0.2
RUSHING_VMAX = 2.0


def uniform_arena_point(rng: np.random.Generator, config: ScenarioConfig, inset: float = 0.0) -> np.ndarray:
    """Uniform point in the arena, kept ``inset`` metres away from the walls."""
    half_w = max(0.5 * config.arena[0] - inset, 0.0)
    half_h = max(0.5 * config.arena[1] - inset, 0.0)
    return np.array([rng.uniform(-half_w, half_w), rng.uniform(-half_h, half_h)])


def _inside_arena(point: np.ndarray, config: ScenarioConfig, inset: float) -> bool:
    return abs(point[0]) <= 0.5 * config.arena[0] - inset and abs(point[1]) <= 0.5 * config.arena[1] - inset


def _clear_of(point: np.ndarray, radius: float, placed: list[tuple[np.ndarray, float]], margin: float) -> bool:
    for other_position, other_radius in placed:
        if float(np.linalg.norm(point - other_position)) <= radius + other_radius + margin:
            return False
    return True


def _place_disc(
    rng: np.random.Generator,
    config: ScenarioConfig,
    radius: float,
    placed: list[tuple[np.ndarray, float]],
    what: str,
) -> np.ndarray:
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        candidate = uniform_arena_point(rng, config, inset=radius)
        if _clear_of(candidate, radius, placed, config.spawn_margin):
            return candidate
    raise ScenarioError(
        f"Could not place {what} without overlap after {MAX_PLACEMENT_ATTEMPTS} attempts "
        f"(arena={config.arena}, humans={config.human_count})"
    )


def rushing_count(human_count: int, fraction: float) -> int:
    """round(fraction * H) with halves rounded up."""
    return int(math.floor(fraction * human_count + 0.5))


def _group_sizes(rng: np.random.Generator, spec: GroupSpec, human_count: int) -> list[int]:
    low, high = spec.group_size_range
    sizes: list[int] = []
    remaining = human_count
    while remaining >= low:
        size = int(rng.integers(low, min(high, remaining) + 1))
        sizes.append(size)
        remaining -= size
    # Leftover humans walk alone.
    sizes.extend([1] * remaining)
    return sizes


def _spawn_group(
    rng: np.random.Generator,
    config: ScenarioConfig,
    spec: GroupSpec,
    radii: np.ndarray,
    placed: list[tuple[np.ndarray, float]],
) -> list[np.ndarray]:
    """Leader plus members on a jittered ring around it. Returns positions, leader first."""
    leader_radius = float(radii[0])
    ring = leader_radius + spec.intra_group_spacing
    member_count = len(radii) - 1
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        leader = uniform_arena_point(rng, config, inset=leader_radius)
        if not _clear_of(leader, leader_radius, placed, config.spawn_margin):
            continue
        base_angle = rng.uniform(0.0, 2.0 * math.pi)
        jitter = rng.uniform(-spec.angle_jitter, spec.angle_jitter, size=member_count)
        positions = [leader]
        local: list[tuple[np.ndarray, float]] = [(leader, leader_radius)]
        ok = True
        for j in range(member_count):
            angle = base_angle + 2.0 * math.pi * j / member_count + jitter[j]
            member = leader + ring * np.array([math.cos(angle), math.sin(angle)])
            radius = float(radii[j + 1])
            if not _inside_arena(member, config, radius) or not _clear_of(
                member, radius, placed + local, config.spawn_margin
            ):
                ok = False
                break
            positions.append(member)
            local.append((member, radius))
        if ok:
            return positions
    raise ScenarioError(f"Could not place a group of {len(radii)} after {MAX_PLACEMENT_ATTEMPTS} attempts")


def sync_group_goals(humans: list[AgentState]) -> list[AgentState]:
    """Members' goal = leader goal + own offset."""
    leaders = {human.group_id: human for human in humans if human.group_id is not None and not human.is_group_member}
    synced = []
    for human in humans:
        if human.is_group_member and human.group_id in leaders:
            goal = leaders[human.group_id].goal + human.goal_offset
            human = replace(human, goal=goal)
        synced.append(human)
    return synced


def _spawn_robot(
    rng: np.random.Generator, config: ScenarioConfig, placed: list[tuple[np.ndarray, float]]
) -> RobotState:
    min_separation = config.min_start_goal_distance
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        start = _place_disc(rng, config, config.robot_radius, placed, "robot start")
        goal = uniform_arena_point(rng, config, inset=config.robot_radius)
        if float(np.linalg.norm(goal - start)) >= min_separation:
            return RobotState(
                position=start,
                velocity=np.zeros(2),
                goal=goal,
                radius=config.robot_radius,
                max_speed=config.robot_vmax,
            )
    raise ScenarioError(f"Could not place robot start/goal at least {min_separation} m apart")


def spawn_scenario(config: ScenarioConfig, seed: int) -> WorldState:
    """Spawn a fresh episode: non-overlapping humans, robot start and goal.

    Args:
        config: Scenario configuration
        seed: Seed of the episode's RNG stream (also drives later goal resampling)

    Returns:
        World at step 0 with all agents at rest

    Raises:
        ScenarioError: If rejection sampling fails to place an agent
    """
    rng = np.random.default_rng(seed)
    low, high = config.human_radius_range
    radii = rng.uniform(low, high, size=config.human_count)

    placed: list[tuple[np.ndarray, float]] = []
    positions: list[np.ndarray] = []
    group_ids: list[int | None] = []
    leader_index: list[int | None] = []

    if config.grouping is not None:
        cursor = 0
        for group_id, size in enumerate(_group_sizes(rng, config.grouping, config.human_count)):
            if size == 1:
                position = _place_disc(rng, config, float(radii[cursor]), placed, f"human {cursor}")
                positions.append(position)
                placed.append((position, float(radii[cursor])))
                group_ids.append(None)
                leader_index.append(None)
            else:
                members = _spawn_group(rng, config, config.grouping, radii[cursor : cursor + size], placed)
                for offset, position in enumerate(members):
                    positions.append(position)
                    placed.append((position, float(radii[cursor + offset])))
                    group_ids.append(group_id)
                    leader_index.append(None if offset == 0 else cursor)
            cursor += size
    else:
        for index in range(config.human_count):
            position = _place_disc(rng, config, float(radii[index]), placed, f"human {index}")
            positions.append(position)
            placed.append((position, float(radii[index])))
            group_ids.append(None)
            leader_index.append(None)

    goals = [uniform_arena_point(rng, config, inset=float(radius)) for radius in radii]

    max_speeds = np.full(config.human_count, config.human_vmax)
    rushing = rushing_count(config.human_count, config.rushing_fraction)
    if rushing > 0:
        max_speeds[rng.permutation(config.human_count)[:rushing]] = config.rushing_vmax

    shared_goal = config.grouping is not None and config.grouping.shared_goal
    humans: list[AgentState] = []
    for index in range(config.human_count):
        leader = leader_index[index]
        goal_offset = None
        if leader is not None and shared_goal:
            goal_offset = positions[index] - positions[leader]
        humans.append(
            AgentState(
                position=positions[index],
                velocity=np.zeros(2),
                radius=float(radii[index]),
                goal=goals[index],
                max_speed=float(max_speeds[index]),
                behavior=config.behavior,
                agent_id=index,
                group_id=group_ids[index],
                goal_offset=goal_offset,
            )
        )
    humans = sync_group_goals(humans)

    robot = _spawn_robot(rng, config, placed)

    logger.debug(
        f"Spawned scenario seed={seed}: humans={config.human_count}, rushing={rushing}, "
        f"groups={len({g for g in group_ids if g is not None})}"
    )
    return WorldState(
        humans=humans,
        robot=robot,
        step_index=0,
        dt=config.dt,
        time_limit=config.time_limit,
        robot_visible=config.robot_visible,
        config=config,
        rng=rng,
    )


def _with_goal(human: AgentState, goal: np.ndarray) -> AgentState:
    return replace(human, goal=goal)


def resample_goals(world: WorldState, rng: np.random.Generator) -> WorldState:
    """At positive multiples of the period, each free walker redraws its goal with the configured probability.

    Group members follow their leader. Draws happen for every human at period steps so the RNG
    stream does not depend on which humans were selected.
    """
    spec = world.config.goal_resample
    if world.step_index == 0 or world.step_index % spec.period != 0 or not world.humans:
        return world

    draws = rng.random(world.human_count)
    humans = []
    for human, draw in zip(world.humans, draws):
        new_goal = uniform_arena_point(rng, world.config, inset=human.radius)
        if draw < spec.probability and not human.is_group_member:
            human = _with_goal(human, new_goal)
        humans.append(human)
    world.humans = sync_group_goals(humans)
    return world


def retarget_arrived_humans(world: WorldState) -> WorldState:
    """Free walkers within their own radius of the goal draw a fresh one."""
    changed = False
    humans = []
    for human in world.humans:
        if not human.is_group_member and float(np.linalg.norm(human.goal - human.position)) < human.radius:
            human = _with_goal(human, uniform_arena_point(world.rng, world.config, inset=human.radius))
            changed = True
        humans.append(human)
    world.humans = sync_group_goals(humans) if changed else humans
    return world


def make_ood_variant(config: ScenarioConfig, variant: OodVariant) -> ScenarioConfig:
    """Derive one of the out-of-distribution scenario families from an in-distribution config."""
    variant = OodVariant(variant)
    if variant is OodVariant.RUSHING:
        update = {"rushing_fraction": RUSHING_FRACTION, "rushing_vmax": RUSHING_VMAX}
    elif variant is OodVariant.SF_MODEL:
        update = {"behavior": Behavior.SOCIAL_FORCE}
    else:
        update = {"grouping": config.grouping or GroupSpec()}
    # model_copy skips validation; re-validate through the constructor.
    return ScenarioConfig(**{**config.model_dump(), **update})
