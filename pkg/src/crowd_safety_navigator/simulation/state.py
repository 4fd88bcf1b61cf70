"""Agent, robot and world state types plus the velocity helpers every behaviour shares."""

import copy
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from crowd_safety_navigator.config import Behavior, ScenarioConfig
from crowd_safety_navigator.errors import InputValidationError

ROBOT_AGENT_ID = -1


def clamp_velocity(v: np.ndarray, v_max: float) -> np.ndarray:
    """Scale ``v`` down onto the disc of radius ``v_max``; direction is preserved.

    Raises:
        InputValidationError: If v_max is not positive
    """
    if not v_max > 0:
        raise InputValidationError(f"v_max must be positive, got {v_max}")
    v = np.asarray(v, dtype=float)
    speed = float(np.hypot(v[0], v[1]))
    if speed <= v_max:
        return v.copy()
    return v * (v_max / speed)


@dataclass(frozen=True, eq=False)
class AgentState:
    """Kinematic state of one pedestrian."""

    position: np.ndarray
    velocity: np.ndarray
    radius: float
    goal: np.ndarray
    max_speed: float
    behavior: Behavior = Behavior.ORCA
    agent_id: int = 0
    group_id: int | None = None
    # Offset from the group leader's goal; None for leaders and solo walkers.
    goal_offset: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise InputValidationError(f"agent radius must be positive, got {self.radius}")

    @property
    def is_group_member(self) -> bool:
        return self.goal_offset is not None

    def moved(self, velocity: np.ndarray, dt: float) -> "AgentState":
        return replace(self, velocity=velocity, position=self.position + velocity * dt)


@dataclass(frozen=True, eq=False)
class RobotState:
    position: np.ndarray
    velocity: np.ndarray
    goal: np.ndarray
    radius: float = 0.2
    max_speed: float = 1.0

    def as_agent(self, behavior: Behavior = Behavior.ORCA) -> AgentState:
        """View the robot as a pedestrian-like agent (visible robot, reactive planners)."""
        return AgentState(
            position=self.position,
            velocity=self.velocity,
            radius=self.radius,
            goal=self.goal,
            max_speed=self.max_speed,
            behavior=behavior,
            agent_id=ROBOT_AGENT_ID,
        )

    @property
    def distance_to_goal(self) -> float:
        return float(np.linalg.norm(self.goal - self.position))


class Event(str, Enum):
    RUNNING = "running"
    REACHED_GOAL = "reached_goal"
    COLLISION = "collision"
    TIMEOUT = "timeout"

    @property
    def is_terminal(self) -> bool:
        return self is not Event.RUNNING


@dataclass
class WorldState:
    """Single-owner mutable episode state; one episode owns one world and one RNG stream."""

    humans: list[AgentState]
    robot: RobotState
    step_index: int
    dt: float
    time_limit: float
    robot_visible: bool
    config: ScenarioConfig
    rng: np.random.Generator = field(repr=False)
    terminated: bool = False

    @property
    def human_count(self) -> int:
        return len(self.humans)

    @property
    def clock(self) -> float:
        return self.step_index * self.dt

    @property
    def human_positions(self) -> np.ndarray:
        if not self.humans:
            return np.zeros((0, 2))
        return np.stack([human.position for human in self.humans])

    @property
    def human_velocities(self) -> np.ndarray:
        if not self.humans:
            return np.zeros((0, 2))
        return np.stack([human.velocity for human in self.humans])

    @property
    def human_radii(self) -> np.ndarray:
        return np.array([human.radius for human in self.humans], dtype=float)

    def copy(self) -> "WorldState":
        """Independent copy, including the RNG stream state."""
        return replace(self, humans=list(self.humans), rng=copy.deepcopy(self.rng))


@dataclass
class Transition:
    next_state: WorldState
    event: Event
    robot_displacement_toward_goal: float
    robot_step_length: float = 0.0
    human_contacts: int = 0


def preferred_velocity(agent: AgentState) -> np.ndarray:
    """Unit vector towards the goal scaled to max speed; zero once on the goal."""
    to_goal = agent.goal - agent.position
    distance = float(np.hypot(to_goal[0], to_goal[1]))
    if distance < 1e-9:
        return np.zeros(2)
    return to_goal * (agent.max_speed / distance)
