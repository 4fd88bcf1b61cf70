"""Episode traces: in-memory records, JSONL serialization and post-hoc danger annotation.

A trace file holds one header object followed by one step object per simulator step. Step
record ``i`` describes the world right after step ``i + 1``; the header carries the spawn
state, so the trace alone is enough to recompute every metric and replay the conformal layer.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from crowd_safety_navigator.config import ScenarioConfig
from crowd_safety_navigator.errors import InputValidationError, TraceFormatError
from crowd_safety_navigator.simulation.state import Event
from crowd_safety_navigator.validators.trace_validator import TraceValidator

logger = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = 1


def _points(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float).reshape(-1, 2)


def _listed(array: np.ndarray | None) -> list | None:
    return None if array is None else np.asarray(array, dtype=float).tolist()


def _grid(value: Any, count: int, tail: tuple[int, ...]) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if count == 0:
        return np.zeros((0, 0) + tail)
    return array.reshape((count, -1) + tail)


@dataclass(eq=False)
class TraceHeader:
    scenario: ScenarioConfig
    seed: int
    config_hash: str
    policy: str
    variant: str
    robot_start: np.ndarray
    robot_goal: np.ndarray
    human_radii: np.ndarray
    initial_human_positions: np.ndarray
    initial_human_velocities: np.ndarray
    horizon: int = 5
    danger_window: int = 2

    @property
    def dt(self) -> float:
        return self.scenario.dt

    @property
    def robot_radius(self) -> float:
        return self.scenario.robot_radius

    @property
    def human_count(self) -> int:
        return int(self.human_radii.shape[0])

    def to_record(self) -> dict[str, Any]:
        return {
            "type": "header",
            "format_version": TRACE_FORMAT_VERSION,
            "scenario": self.scenario.model_dump(mode="json"),
            "seed": int(self.seed),
            "config_hash": self.config_hash,
            "policy": self.policy,
            "variant": self.variant,
            "dt": self.dt,
            "robot_radius": self.robot_radius,
            "robot_start": _listed(self.robot_start),
            "robot_goal": _listed(self.robot_goal),
            "human_radii": _listed(self.human_radii),
            "initial_human_positions": _listed(self.initial_human_positions),
            "initial_human_velocities": _listed(self.initial_human_velocities),
            "horizon": int(self.horizon),
            "danger_window": int(self.danger_window),
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "TraceHeader":
        if record.get("format_version") != TRACE_FORMAT_VERSION:
            raise TraceFormatError(
                f"Unsupported trace format_version {record.get('format_version')}, expected {TRACE_FORMAT_VERSION}"
            )
        try:
            scenario = ScenarioConfig.model_validate(record["scenario"])
        except ValidationError as e:
            raise TraceFormatError(f"Trace header carries an invalid scenario: {e}") from e
        return cls(
            scenario=scenario,
            seed=int(record["seed"]),
            config_hash=record["config_hash"],
            policy=record["policy"],
            variant=record["variant"],
            robot_start=np.asarray(record["robot_start"], dtype=float),
            robot_goal=np.asarray(record["robot_goal"], dtype=float),
            human_radii=np.asarray(record["human_radii"], dtype=float),
            initial_human_positions=_points(record["initial_human_positions"]),
            initial_human_velocities=_points(record["initial_human_velocities"]),
            horizon=int(record["horizon"]),
            danger_window=int(record["danger_window"]),
        )


@dataclass(eq=False)
class StepRecord:
    step: int
    time: float
    robot_position: np.ndarray
    robot_velocity: np.ndarray
    action: np.ndarray
    human_positions: np.ndarray
    human_velocities: np.ndarray
    event: Event
    reward: float
    cost: float
    intrusion: float
    human_contacts: int = 0
    predictions: np.ndarray | None = None  # (H, K, 2)
    uncertainty: np.ndarray | None = None  # (H, K)
    danger: bool = False
    danger_distance: float | None = None

    def to_record(self) -> dict[str, Any]:
        return {
            "type": "step",
            "step": int(self.step),
            "time": float(self.time),
            "robot_position": _listed(self.robot_position),
            "robot_velocity": _listed(self.robot_velocity),
            "action": _listed(self.action),
            "human_positions": _listed(self.human_positions),
            "human_velocities": _listed(self.human_velocities),
            "event": Event(self.event).value,
            "reward": float(self.reward),
            "cost": float(self.cost),
            "intrusion": float(self.intrusion),
            "human_contacts": int(self.human_contacts),
            "predictions": _listed(self.predictions),
            "uncertainty": _listed(self.uncertainty),
            "danger": bool(self.danger),
            "danger_distance": None if self.danger_distance is None else float(self.danger_distance),
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "StepRecord":
        predictions = record.get("predictions")
        uncertainty = record.get("uncertainty")
        count = len(record["human_positions"])
        return cls(
            step=int(record["step"]),
            time=float(record["time"]),
            robot_position=np.asarray(record["robot_position"], dtype=float),
            robot_velocity=np.asarray(record["robot_velocity"], dtype=float),
            action=np.asarray(record["action"], dtype=float),
            human_positions=_points(record["human_positions"]),
            human_velocities=_points(record["human_velocities"]),
            event=Event(record["event"]),
            reward=float(record["reward"]),
            cost=float(record["cost"]),
            intrusion=float(record["intrusion"]),
            human_contacts=int(record["human_contacts"]),
            predictions=None if predictions is None else _grid(predictions, count, (2,)),
            uncertainty=None if uncertainty is None else _grid(uncertainty, count, ()),
            danger=bool(record["danger"]),
            danger_distance=record.get("danger_distance"),
        )


@dataclass(eq=False)
class EpisodeTrace:
    header: TraceHeader
    steps: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def outcome(self) -> Event:
        """Terminal event of the episode; RUNNING for a truncated trace."""
        return self.steps[-1].event if self.steps else Event.RUNNING

    @property
    def duration(self) -> float:
        """Episode length in simulated seconds."""
        return self.steps[-1].time if self.steps else 0.0

    @property
    def robot_positions(self) -> np.ndarray:
        """Robot path including the start point, shape (T + 1, 2)."""
        return np.vstack([self.header.robot_start[None, :]] + [step.robot_position[None, :] for step in self.steps])

    @property
    def path_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.robot_positions, axis=0), axis=1).sum())

    @property
    def danger_steps(self) -> int:
        return sum(1 for step in self.steps if step.danger)

    @property
    def total_cost(self) -> float:
        return float(sum(step.cost for step in self.steps))

    @property
    def total_reward(self) -> float:
        return float(sum(step.reward for step in self.steps))

    @property
    def missing_steps(self) -> list[int]:
        """Step numbers up to the last recorded one that have no record."""
        if not self.steps:
            return []
        present = {step.step for step in self.steps}
        return [number for number in range(1, self.steps[-1].step + 1) if number not in present]


def danger_check(
    robot_pos: np.ndarray,
    ground_truth_future: np.ndarray,
    radii: np.ndarray,
    robot_radius: float,
    current_positions: np.ndarray | None = None,
) -> tuple[bool, float | None]:
    """Does the robot centre sit inside any human's body at one of its next positions?

    Args:
        robot_pos: Robot centre at the step being checked
        ground_truth_future: True human positions over the lookahead window, shape (W, H, 2);
            W may be shorter than the configured window (or zero) near the episode end
        radii: Human radii, shape (H,)
        robot_radius: Robot radius
        current_positions: Human positions at the checked step; the logged distance is measured
            to these when given, otherwise to the window positions

    Returns:
        (flag, minimal surface gap to any human), the distance being None when not flagged
    """
    future = np.asarray(ground_truth_future, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if future.size == 0 or radii.size == 0:
        return False, None
    robot = np.asarray(robot_pos, dtype=float)
    future = future.reshape(-1, radii.size, 2)
    limit = robot_radius + radii
    distances = np.linalg.norm(future - robot, axis=-1)  # (W, H)
    if not np.any(distances < limit):
        return False, None
    reference = distances if current_positions is None else np.linalg.norm(
        np.asarray(current_positions, dtype=float) - robot, axis=-1
    )[None, :]
    return True, float(np.min(reference - limit))


def annotate_danger(trace: EpisodeTrace, window: int | None = None) -> EpisodeTrace:
    """Fill every step's danger flag and distance from the positions recorded after it."""
    window = trace.header.danger_window if window is None else window
    if window < 1:
        raise InputValidationError(f"danger window must be >= 1, got {window}")
    positions = [step.human_positions for step in trace.steps]
    for index, step in enumerate(trace.steps):
        future = positions[index + 1 : index + 1 + window]
        stacked = np.stack(future) if future else np.zeros((0, trace.header.human_count, 2))
        step.danger, step.danger_distance = danger_check(
            step.robot_position,
            stacked,
            trace.header.human_radii,
            trace.header.robot_radius,
            current_positions=step.human_positions,
        )
    return trace


def trace_lines(trace: EpisodeTrace) -> list[str]:
    records = [trace.header.to_record()] + [step.to_record() for step in trace.steps]
    return [json.dumps(record, sort_keys=True, separators=(",", ":")) for record in records]


def write_trace(trace: EpisodeTrace, path: Path | str, validator: TraceValidator | None = None) -> Path:
    """Write a trace as JSONL; every record is checked against the trace contract first.

    Raises:
        TraceFormatError: If a record violates the contract (writing is always strict)
    """
    path = Path(path)
    validator = validator or TraceValidator()
    header = trace.header.to_record()
    validator.validate_header(header)
    steps = [step.to_record() for step in trace.steps]
    if len(validator.validate_all(steps, human_count=trace.header.human_count)) != len(steps):
        raise TraceFormatError(f"Refusing to write trace with invalid records to {path}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(trace_lines(trace)) + "\n", encoding="utf-8")
    logger.debug(f"Trace with {len(steps)} steps written to {path}")
    return path


def read_trace(path: Path | str, strict: bool = False, validator: TraceValidator | None = None) -> EpisodeTrace:
    """Load a JSONL trace.

    Args:
        path: Trace file
        strict: Raise on invalid step records instead of logging and skipping them
        validator: Validator to use; built from the bundled schema when omitted

    Raises:
        TraceFormatError: If the file is unreadable, the header is missing or invalid, or (strict)
            a step record is invalid
    """
    path = Path(path)
    validator = validator or TraceValidator(strict=strict)
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as e:
        raise TraceFormatError(f"Cannot read trace {path}: {e}") from e
    if not lines:
        raise TraceFormatError(f"Trace {path} is empty")

    records: list[dict[str, Any]] = []
    for number, line in enumerate(lines, 1):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            if strict or number == 1:
                raise TraceFormatError(f"{path}:{number}: not valid JSON ({e.msg})") from e
            logger.warning(f"Skipped malformed JSON line {number} in {path}")

    header = TraceHeader.from_record(validator.validate_header(records[0]))
    steps = validator.validate_all(records[1:], human_count=header.human_count)
    trace = EpisodeTrace(header=header, steps=[StepRecord.from_record(record) for record in steps])
    missing = trace.missing_steps
    if missing:
        logger.warning(
            f"Episode seed {header.seed} ({path}) is missing step records {missing}; "
            f"path length and intrusion ratio cover only {len(trace)} recorded steps"
        )
    return trace
