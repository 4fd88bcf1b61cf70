"""Episode state machine: deterministic stepping, event classification and ground-truth lookahead."""

import logging

import numpy as np

from crowd_safety_navigator.config import Behavior
from crowd_safety_navigator.errors import EpisodeTerminatedError, InputValidationError
from crowd_safety_navigator.simulation.orca import orca_velocity
from crowd_safety_navigator.simulation.scenario import resample_goals, retarget_arrived_humans
from crowd_safety_navigator.simulation.social_force import social_force_velocity
from crowd_safety_navigator.simulation.state import (
    AgentState,
    Event,
    RobotState,
    Transition,
    WorldState,
    clamp_velocity,
)

logger = logging.getLogger(__name__)

__all__ = [
    "classify_event",
    "clamp_velocity",
    "compute_human_velocities",
    "count_human_contacts",
    "rollout_humans",
    "step_episode",
]


def _neighbors_of(world: WorldState, index: int) -> list[AgentState]:
    neighbors = [other for j, other in enumerate(world.humans) if j != index]
    if world.robot_visible:
        neighbors.append(world.robot.as_agent())
    return neighbors


def compute_human_velocities(world: WorldState) -> list[np.ndarray]:
    """Next velocity of every human from its own behaviour policy.

    The robot is a neighbour only when the world marks it visible.
    """
    config = world.config
    velocities = []
    for index, human in enumerate(world.humans):
        neighbors = _neighbors_of(world, index)
        if human.behavior is Behavior.SOCIAL_FORCE:
            velocity = social_force_velocity(human, neighbors, config.social_force, world.dt)
        else:
            velocity = orca_velocity(
                human,
                neighbors,
                world.dt,
                time_horizon=config.orca.time_horizon,
                neighbor_dist=config.orca.neighbor_dist,
            )
        velocities.append(velocity)
    return velocities


def _advance(world: WorldState, robot_velocity: np.ndarray) -> None:
    """One Euler step of every agent, in place."""
    resample_goals(world, world.rng)
    velocities = compute_human_velocities(world)
    world.humans = [human.moved(velocity, world.dt) for human, velocity in zip(world.humans, velocities)]
    robot = world.robot
    world.robot = RobotState(
        position=robot.position + robot_velocity * world.dt,
        velocity=robot_velocity,
        goal=robot.goal,
        radius=robot.radius,
        max_speed=robot.max_speed,
    )
    retarget_arrived_humans(world)
    world.step_index += 1


def robot_in_collision(world: WorldState) -> bool:
    if not world.humans:
        return False
    distances = np.linalg.norm(world.human_positions - world.robot.position, axis=1)
    return bool(np.any(distances < world.robot.radius + world.human_radii))


def classify_event(world: WorldState) -> Event:
    """Collision, then goal, then timeout; Running otherwise."""
    if robot_in_collision(world):
        return Event.COLLISION
    if world.robot.distance_to_goal < world.robot.radius:
        return Event.REACHED_GOAL
    if world.step_index >= world.config.max_steps:
        return Event.TIMEOUT
    return Event.RUNNING


def count_human_contacts(world: WorldState) -> int:
    """Overlapping human pairs (recorded, never terminal)."""
    count = world.human_count
    if count < 2:
        return 0
    positions = world.human_positions
    radii = world.human_radii
    distances = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    overlap = distances < radii[:, None] + radii[None, :]
    return int(np.count_nonzero(np.triu(overlap, k=1)))


def step_episode(world: WorldState, robot_action: np.ndarray) -> Transition:
    """Advance the episode by one step under ``robot_action``.

    The world is single-owner state and is advanced in place; ``Transition.next_state`` is the
    same object.

    Args:
        world: Live episode state
        robot_action: Commanded robot velocity (v_x, v_y), clamped to the robot's max speed

    Returns:
        Transition with the classified event and the progress made toward the goal

    Raises:
        EpisodeTerminatedError: If the episode already ended
        InputValidationError: If the action is not a finite 2-vector
    """
    if world.terminated:
        raise EpisodeTerminatedError(f"Episode already terminated at step {world.step_index}")
    action = np.asarray(robot_action, dtype=float)
    if action.shape != (2,) or not np.all(np.isfinite(action)):
        raise InputValidationError(f"robot_action must be a finite 2-vector, got {robot_action!r}")

    distance_before = world.robot.distance_to_goal
    robot_velocity = clamp_velocity(action, world.robot.max_speed)
    _advance(world, robot_velocity)

    event = classify_event(world)
    world.terminated = event.is_terminal
    transition = Transition(
        next_state=world,
        event=event,
        robot_displacement_toward_goal=distance_before - world.robot.distance_to_goal,
        robot_step_length=float(np.linalg.norm(robot_velocity)) * world.dt,
        human_contacts=count_human_contacts(world),
    )
    if event.is_terminal:
        logger.debug(f"Episode ended at step {world.step_index}: {event.value}")
    return transition


def rollout_humans(world: WorldState, steps: int) -> np.ndarray:
    """Ground-truth future human positions, shape (n, H, 2) with n = min(steps, steps left).

    Runs a copy of the world forward with the robot holding its current velocity, so the live
    world and its RNG stream are untouched. Exact whenever the robot is invisible to humans.
    """
    if steps < 0:
        raise InputValidationError(f"steps must be non-negative, got {steps}")
    shadow = world.copy()
    remaining = max(world.config.max_steps - world.step_index, 0)
    frames = []
    for _ in range(min(steps, remaining)):
        _advance(shadow, shadow.robot.velocity)
        frames.append(shadow.human_positions)
    if not frames:
        return np.zeros((0, world.human_count, 2))
    return np.stack(frames)
