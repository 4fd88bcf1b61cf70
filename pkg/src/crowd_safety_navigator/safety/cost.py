"""Safety-critical areas around humans, maximum intrusion, and the CMDP reward / cost signals."""

from dataclasses import dataclass

import numpy as np

from crowd_safety_navigator.config import SafetyCostConfig
from crowd_safety_navigator.errors import InputValidationError
from crowd_safety_navigator.simulation.state import Event, Transition, WorldState
from crowd_safety_navigator.uncertainty.prediction import PredictionSet


@dataclass(frozen=True, eq=False)
class SafetyAreas:
    """Comfort discs around current positions and uncertainty discs around the first K' predictions."""

    current_centers: np.ndarray  # (H, 2)
    current_radii: np.ndarray  # (H,)
    predicted_centers: np.ndarray  # (H, K', 2)
    predicted_radii: np.ndarray  # (H, K')

    @property
    def cost_horizon(self) -> int:
        return int(self.predicted_radii.shape[1]) if self.predicted_radii.ndim == 2 else 0


def build_safety_areas(
    world: WorldState,
    predictions: PredictionSet | None,
    uncertainty: np.ndarray | None,
    config: SafetyCostConfig,
) -> SafetyAreas:
    """r1 = r_ego + r_h + r_comfort around p_h; r2 = r_ego + r_h + radius_hk around p_hk for k <= K'."""
    r_ego = world.robot.radius
    radii = world.human_radii
    count = world.human_count
    current_radii = r_ego + radii + config.comfort_radius

    cost_horizon = 0
    if predictions is not None and config.cost_horizon > 0:
        cost_horizon = min(config.cost_horizon, predictions.horizon)
    if cost_horizon == 0:
        return SafetyAreas(world.human_positions, current_radii, np.zeros((count, 0, 2)), np.zeros((count, 0)))

    grid = np.zeros((count, predictions.horizon)) if uncertainty is None else np.asarray(uncertainty, dtype=float)
    if grid.shape != (count, predictions.horizon):
        raise InputValidationError(f"uncertainty grid {grid.shape} does not match predictions {(count, predictions.horizon)}")
    predicted_radii = r_ego + radii[:, None] + np.maximum(grid[:, :cost_horizon], 0.0)
    return SafetyAreas(
        current_centers=world.human_positions,
        current_radii=current_radii,
        predicted_centers=predictions.points[:, :cost_horizon],
        predicted_radii=predicted_radii,
    )


def max_intrusion(robot_pos: np.ndarray, areas: SafetyAreas) -> float:
    """Deepest penetration of the robot centre into any disc; 0 outside all of them."""
    robot_pos = np.asarray(robot_pos, dtype=float)
    depth = 0.0
    if areas.current_radii.size:
        distances = np.linalg.norm(areas.current_centers - robot_pos, axis=-1)
        depth = max(depth, float(np.max(areas.current_radii - distances)))
    if areas.predicted_radii.size:
        distances = np.linalg.norm(areas.predicted_centers - robot_pos, axis=-1)
        depth = max(depth, float(np.max(areas.predicted_radii - distances)))
    return max(depth, 0.0)


def step_cost(d_intru: float, cost_scale: float = 2.5) -> float:
    if d_intru < 0:
        raise InputValidationError(f"intrusion must be non-negative, got {d_intru}")
    return cost_scale * d_intru


def step_reward(transition: Transition, config: SafetyCostConfig = SafetyCostConfig()) -> float:
    """Terminal bonus / penalty, or the potential term for running and timed-out steps."""
    if transition.event is Event.REACHED_GOAL:
        return config.success_reward
    if transition.event is Event.COLLISION:
        return config.collision_penalty
    return config.potential_scale * transition.robot_displacement_toward_goal


@dataclass(frozen=True)
class StepSignal:
    reward: float
    cost: float
    intrusion: float


def step_signal(transition: Transition, areas: SafetyAreas, config: SafetyCostConfig) -> StepSignal:
    intrusion = max_intrusion(transition.next_state.robot.position, areas)
    return StepSignal(
        reward=step_reward(transition, config),
        cost=step_cost(intrusion, config.cost_scale),
        intrusion=intrusion,
    )
