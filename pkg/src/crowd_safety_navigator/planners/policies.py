"""Planner adapters behind one interface, and resolution from ``--policy`` strings."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from crowd_safety_navigator.config import MpcConfig, SocialForceParams, TrainingVariant
from crowd_safety_navigator.errors import InputValidationError
from crowd_safety_navigator.learning.checkpoint import Checkpoint, load_checkpoint
from crowd_safety_navigator.learning.network import Observation, policy_forward
from crowd_safety_navigator.planners.mpc import mpc_plan
from crowd_safety_navigator.planners.reactive import orca_planner, sf_planner
from crowd_safety_navigator.simulation.state import WorldState
from crowd_safety_navigator.uncertainty.prediction import PredictionSet

logger = logging.getLogger(__name__)

CHECKPOINT_PREFIX = "checkpoint:"


@dataclass(frozen=True, eq=False)
class PlanningContext:
    """Everything a planner may look at before choosing the next robot velocity."""

    world: WorldState
    predictions: PredictionSet | None
    uncertainty: np.ndarray | None
    observation: Observation | None = None


class Planner(Protocol):
    name: str
    variant: TrainingVariant
    max_humans: int | None

    def reset(self, seed: int) -> None: ...

    def act(self, context: PlanningContext) -> np.ndarray: ...


class OrcaPlanner:
    name = "orca"
    variant = TrainingVariant.OURS
    max_humans = None

    def reset(self, seed: int) -> None:
        pass

    def act(self, context: PlanningContext) -> np.ndarray:
        return orca_planner(context.world)


class SocialForcePlanner:
    name = "sf"
    variant = TrainingVariant.OURS
    max_humans = None

    def __init__(self, params: SocialForceParams | None = None) -> None:
        self.params = params

    def reset(self, seed: int) -> None:
        pass

    def act(self, context: PlanningContext) -> np.ndarray:
        return sf_planner(context.world, self.params)


class MpcPlanner:
    name = "mpc"
    variant = TrainingVariant.OURS
    max_humans = None

    def __init__(self, config: MpcConfig = MpcConfig()) -> None:
        self.config = config
        self.rng = np.random.default_rng(0)
        self.last_cost = 0.0

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng([seed, 2])

    def act(self, context: PlanningContext) -> np.ndarray:
        plan = mpc_plan(context.world, context.predictions, context.uncertainty, self.config, self.rng)
        self.last_cost = plan.cost
        return plan.action


class LearnedPolicy:
    """Deterministic mean action of a trained checkpoint (no exploration noise)."""

    def __init__(self, checkpoint: Checkpoint, name: str | None = None) -> None:
        self.checkpoint = checkpoint
        self.name = name or "learned"
        self.variant = checkpoint.variant
        self.max_humans = checkpoint.max_humans

    @property
    def horizon(self) -> int:
        return self.checkpoint.params.config.horizon

    def reset(self, seed: int) -> None:
        pass

    def act(self, context: PlanningContext) -> np.ndarray:
        if context.observation is None:
            raise InputValidationError("learned policy needs an encoded observation")
        mean, _, _, _ = policy_forward(self.checkpoint.params, context.observation)
        return np.asarray(mean)


def resolve_policy(spec: str, mpc: MpcConfig = MpcConfig(), social_force: SocialForceParams | None = None) -> Planner:
    """Build a planner from "mpc", "orca", "sf" or "checkpoint:<path>".

    Raises:
        InputValidationError: If the string names no known planner
        CheckpointError: If the checkpoint cannot be loaded
    """
    if spec == "mpc":
        return MpcPlanner(mpc)
    if spec == "orca":
        return OrcaPlanner()
    if spec == "sf":
        return SocialForcePlanner(social_force)
    if spec.startswith(CHECKPOINT_PREFIX):
        path = Path(spec[len(CHECKPOINT_PREFIX) :])
        checkpoint = load_checkpoint(path)
        logger.info(f"Loaded {checkpoint.variant.value} policy from {path}")
        return LearnedPolicy(checkpoint, name=path.stem if path.stem != "checkpoint" else path.parent.name)
    raise InputValidationError(f"Unknown policy '{spec}'. Supported: mpc, orca, sf, checkpoint:<path>")
