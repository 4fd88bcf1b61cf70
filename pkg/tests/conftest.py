"""Pytest configuration and fixtures."""

import os
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest

from crowd_safety_navigator.config import ScenarioConfig
from crowd_safety_navigator.metrics.trace import EpisodeTrace, StepRecord, TraceHeader, annotate_danger
from crowd_safety_navigator.simulation.state import AgentState, Event, RobotState, WorldState

ZERO_HASH = "0" * 64


def pytest_collection_modifyitems(config, items):
    """Desk-scale training runs take minutes to hours; opt in with CROWDNAV_RUN_SLOW=1."""
    if os.getenv("CROWDNAV_RUN_SLOW", "0") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set CROWDNAV_RUN_SLOW=1 to run slow acceptance tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def default_scenario() -> ScenarioConfig:
    """In-distribution scenario: 20 ORCA humans in a 12 x 12 m arena."""
    return ScenarioConfig()


@pytest.fixture
def desk_scenario() -> ScenarioConfig:
    """Desk-scale scenario: 5 humans in an 8 x 8 m arena."""
    return ScenarioConfig.desk()


@pytest.fixture
def schema_path() -> Path:
    """Path to the trace schema bundled with the package."""
    project_root = Path(__file__).parent.parent / "src" / "crowd_safety_navigator"
    return project_root / "contracts" / "trace_record_schema.json"


@pytest.fixture
def scenario_dir() -> Path:
    return Path(__file__).parent.parent / "config" / "scenarios"


@pytest.fixture
def make_world() -> Callable[..., WorldState]:
    """Factory for hand-placed worlds.

    Humans are dicts with ``position`` and optional ``velocity``, ``radius``, ``goal``,
    ``max_speed``; a human without a goal walks toward a point far to its right.
    """

    def build(
        robot_position: Sequence[float] = (0.0, 0.0),
        robot_goal: Sequence[float] = (4.0, 0.0),
        humans: Sequence[dict] = (),
        robot_velocity: Sequence[float] = (0.0, 0.0),
        config: ScenarioConfig | None = None,
        step_index: int = 0,
    ) -> WorldState:
        config = config or ScenarioConfig(human_count=len(humans))
        agents = []
        for index, spec in enumerate(humans):
            position = np.asarray(spec["position"], dtype=float)
            agents.append(
                AgentState(
                    position=position,
                    velocity=np.asarray(spec.get("velocity", (0.0, 0.0)), dtype=float),
                    radius=float(spec.get("radius", 0.3)),
                    goal=np.asarray(spec.get("goal", position + np.array([5.0, 0.0])), dtype=float),
                    max_speed=float(spec.get("max_speed", config.human_vmax)),
                    behavior=config.behavior,
                    agent_id=index,
                )
            )
        robot = RobotState(
            position=np.asarray(robot_position, dtype=float),
            velocity=np.asarray(robot_velocity, dtype=float),
            goal=np.asarray(robot_goal, dtype=float),
            radius=config.robot_radius,
            max_speed=config.robot_vmax,
        )
        return WorldState(
            humans=agents,
            robot=robot,
            step_index=step_index,
            dt=config.dt,
            time_limit=config.time_limit,
            robot_visible=config.robot_visible,
            config=config,
            rng=np.random.default_rng(0),
        )

    return build


@pytest.fixture
def make_trace() -> Callable[..., EpisodeTrace]:
    """Factory for crafted traces.

    ``robot_path`` lists robot positions after each step (start given separately);
    ``human_path`` lists the positions of every human after each step.
    """

    def build(
        robot_path: Sequence[Sequence[float]],
        human_path: Sequence[Sequence[Sequence[float]]] | None = None,
        event: Event = Event.REACHED_GOAL,
        robot_start: Sequence[float] = (0.0, 0.0),
        radii: Sequence[float] = (0.3,),
        costs: Sequence[float] | None = None,
        scenario: ScenarioConfig | None = None,
        policy: str = "orca",
        annotate: bool = True,
    ) -> EpisodeTrace:
        scenario = scenario or ScenarioConfig(human_count=len(radii))
        steps_count = len(robot_path)
        radii_array = np.asarray(radii, dtype=float)
        if human_path is None:
            far = np.array([[50.0 + 2.0 * h, 50.0] for h in range(len(radii))])
            human_path = [far] * steps_count
        header = TraceHeader(
            scenario=scenario,
            seed=0,
            config_hash=ZERO_HASH,
            policy=policy,
            variant="ours",
            robot_start=np.asarray(robot_start, dtype=float),
            robot_goal=np.asarray(robot_path[-1], dtype=float),
            human_radii=radii_array,
            initial_human_positions=np.asarray(human_path[0], dtype=float).reshape(-1, 2),
            initial_human_velocities=np.zeros((len(radii), 2)),
        )
        steps = []
        for index in range(steps_count):
            last = index == steps_count - 1
            steps.append(
                StepRecord(
                    step=index + 1,
                    time=(index + 1) * scenario.dt,
                    robot_position=np.asarray(robot_path[index], dtype=float),
                    robot_velocity=np.zeros(2),
                    action=np.zeros(2),
                    human_positions=np.asarray(human_path[index], dtype=float).reshape(-1, 2),
                    human_velocities=np.zeros((len(radii), 2)),
                    event=event if last else Event.RUNNING,
                    reward=0.0,
                    cost=0.0 if costs is None else float(costs[index]),
                    intrusion=0.0,
                )
            )
        trace = EpisodeTrace(header=header, steps=steps)
        return annotate_danger(trace) if annotate else trace

    return build
