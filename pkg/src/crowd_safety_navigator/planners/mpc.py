"""Random-shooting MPC that treats DtACI radii as soft inflation of the predicted human discs."""

import logging
from dataclasses import dataclass

import numpy as np

from crowd_safety_navigator.config import MpcConfig
from crowd_safety_navigator.errors import InputValidationError
from crowd_safety_navigator.simulation.state import WorldState, clamp_velocity, preferred_velocity
from crowd_safety_navigator.uncertainty.prediction import PredictionSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpcPlan:
    action: np.ndarray
    cost: float
    min_clearance: float
    candidate: int


@dataclass(frozen=True, eq=False)
class CandidateScores:
    costs: np.ndarray  # (S,)
    min_clearance: np.ndarray  # (S,)
    hard_penetration: np.ndarray  # (S,)
    soft_penetration: np.ndarray  # (S,)
    terminal_distance: np.ndarray  # (S,)


def _clamp_rows(velocities: np.ndarray, v_max: float) -> np.ndarray:
    speed = np.linalg.norm(velocities, axis=-1, keepdims=True)
    return velocities * np.minimum(1.0, v_max / np.maximum(speed, 1e-12))


def sample_candidates(world: WorldState, config: MpcConfig, rng: np.random.Generator) -> np.ndarray:
    """(samples, horizon, 2) velocity sequences inside the robot's speed disc."""
    robot = world.robot
    count = config.samples
    speed = robot.max_speed * np.sqrt(rng.random(count))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=count)
    base = np.stack([speed * np.cos(angle), speed * np.sin(angle)], axis=-1)
    candidates = np.repeat(base[:, None, :], config.horizon, axis=1)
    if config.sampler == "perturbed" and config.perturbation_std > 0:
        candidates = candidates + rng.normal(0.0, config.perturbation_std, size=candidates.shape)
    if config.include_goal_candidate:
        candidates[0] = preferred_velocity(robot.as_agent())
    return _clamp_rows(candidates, robot.max_speed)


def score_candidates(
    world: WorldState,
    predictions: PredictionSet | None,
    uncertainty: np.ndarray | None,
    candidates: np.ndarray,
    config: MpcConfig,
) -> CandidateScores:
    """goal_weight * terminal distance + collision_weight * hard penetration + uncertainty_weight * soft penetration."""
    robot = world.robot
    horizon = candidates.shape[1]
    trajectory = robot.position + np.cumsum(candidates * world.dt, axis=1)  # (S, N, 2)
    terminal_distance = np.linalg.norm(trajectory[:, -1] - robot.goal, axis=-1)

    count = candidates.shape[0]
    hard = np.zeros(count)
    soft = np.zeros(count)
    clearance = np.full(count, np.inf)
    if world.human_count and predictions is not None:
        if predictions.horizon < horizon:
            raise InputValidationError(f"MPC horizon {horizon} exceeds prediction horizon {predictions.horizon}")
        centers = predictions.points[:, :horizon].transpose(1, 0, 2)  # (N, H, 2)
        distances = np.linalg.norm(trajectory[:, :, None, :] - centers[None], axis=-1)  # (S, N, H)
        body = robot.radius + world.human_radii  # (H,)
        grid = np.zeros((world.human_count, horizon)) if uncertainty is None else np.asarray(uncertainty)[:, :horizon]
        inflated = body[None, :] + np.maximum(grid.T, 0.0)  # (N, H)
        hard = np.maximum(body - distances, 0.0).sum(axis=(1, 2))
        soft = np.maximum(inflated[None] - distances, 0.0).sum(axis=(1, 2))
        clearance = distances.min(axis=(1, 2))

    costs = config.goal_weight * terminal_distance + config.collision_weight * hard + config.uncertainty_weight * soft
    return CandidateScores(costs, clearance, hard, soft, terminal_distance)


def mpc_plan(
    world: WorldState,
    predictions: PredictionSet | None,
    uncertainty: np.ndarray | None,
    config: MpcConfig,
    rng: np.random.Generator,
    candidates: np.ndarray | None = None,
) -> MpcPlan:
    """Best sampled sequence's first velocity, clamped. Ties go to the lowest candidate index."""
    if candidates is None:
        candidates = sample_candidates(world, config, rng)
    scores = score_candidates(world, predictions, uncertainty, candidates, config)
    best = int(np.argmin(scores.costs))
    return MpcPlan(
        action=clamp_velocity(candidates[best, 0], world.robot.max_speed),
        cost=float(scores.costs[best]),
        min_clearance=float(scores.min_clearance[best]),
        candidate=best,
    )
