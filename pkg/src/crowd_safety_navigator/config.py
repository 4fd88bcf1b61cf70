"""Configuration models for scenarios, uncertainty, cost, policy, training and planners."""

import hashlib
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from crowd_safety_navigator.errors import InputValidationError

logger = logging.getLogger(__name__)


class Behavior(str, Enum):
    """Pedestrian behaviour policy."""

    ORCA = "orca"
    SOCIAL_FORCE = "social_force"


class OodVariant(str, Enum):
    """Out-of-distribution scenario families."""

    RUSHING = "rushing"
    SF_MODEL = "sf"
    GROUPS = "groups"


class QueryMode(str, Enum):
    """How an uncertainty radius is read out of a DtACI bank."""

    SAMPLED = "sampled"
    EXPECTED = "expected"


class TrainingVariant(str, Enum):
    """Policy variants: constrained with uncertainty, and the two unconstrained ablations."""

    OURS = "ours"
    RL_ACI = "rl_aci"
    RL_NO_ACI = "rl_no_aci"

    @property
    def constrained(self) -> bool:
        return self is TrainingVariant.OURS

    @property
    def uses_uncertainty(self) -> bool:
        return self is not TrainingVariant.RL_NO_ACI


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class GroupSpec(_Frozen):
    """Geometry of cohesive pedestrian groups."""

    group_size_range: tuple[int, int] = (2, 4)
    # Distance from the leader's surface to each member's centre.
    intra_group_spacing: float = Field(0.6, gt=0)
    shared_goal: bool = True
    angle_jitter: float = Field(0.25, ge=0, description="Ring angle jitter (rad)")

    @field_validator("group_size_range")
    @classmethod
    def _sizes(cls, value: tuple[int, int]) -> tuple[int, int]:
        low, high = value
        if low < 2 or high < low:
            raise ValueError(f"group sizes must satisfy 2 <= low <= high, got {value}")
        return value


class GoalResampleSpec(_Frozen):
    period: int = Field(5, ge=1)
    probability: float = Field(0.5, ge=0, le=1)


class SocialForceParams(_Frozen):
    relaxation_time: float = Field(0.5, gt=0)
    repulsion_strength: float = Field(2.0, gt=0)
    repulsion_range: float = Field(0.3, gt=0)
    neighbor_cutoff: float = Field(4.0, gt=0)


class OrcaParams(_Frozen):
    time_horizon: float = Field(5.0, gt=0)
    neighbor_dist: float = Field(10.0, gt=0)


class ScenarioConfig(_Frozen):
    """Everything needed to spawn and step one crowd episode."""

    arena: tuple[float, float] = (12.0, 12.0)
    human_count: int = Field(20, ge=0)
    human_radius_range: tuple[float, float] = (0.3, 0.5)
    human_vmax: float = Field(1.0, gt=0)
    robot_vmax: float = Field(1.0, gt=0)
    robot_radius: float = Field(0.2, gt=0)
    time_limit: float = Field(50.0, gt=0)
    dt: float = Field(0.25, gt=0)
    behavior: Behavior = Behavior.ORCA
    rushing_fraction: float = Field(0.0, ge=0, le=1)
    rushing_vmax: float = Field(2.0, gt=0)
    grouping: GroupSpec | None = None
    robot_visible: bool = False
    goal_resample: GoalResampleSpec = GoalResampleSpec()
    social_force: SocialForceParams = SocialForceParams()
    orca: OrcaParams = OrcaParams()
    spawn_margin: float = Field(0.1, ge=0)
    robot_goal_min_distance: float | None = Field(
        None, gt=0, description="Defaults to half the shorter arena side"
    )

    @model_validator(mode="after")
    def _ranges(self) -> "ScenarioConfig":
        width, height = self.arena
        if width <= 0 or height <= 0:
            raise ValueError(f"arena sides must be positive, got {self.arena}")
        low, high = self.human_radius_range
        if low <= 0 or high < low:
            raise ValueError(f"human_radius_range must be a nonempty positive range, got {self.human_radius_range}")
        return self

    @property
    def max_steps(self) -> int:
        # ceil without float drift for exact multiples (50 / 0.25 = 200)
        steps = self.time_limit / self.dt
        return int(steps) if abs(steps - round(steps)) < 1e-9 else int(steps) + 1

    @property
    def min_start_goal_distance(self) -> float:
        if self.robot_goal_min_distance is not None:
            return self.robot_goal_min_distance
        return 0.5 * min(self.arena)

    @classmethod
    def desk(cls, **overrides) -> "ScenarioConfig":
        """Desk-scale preset: 5 humans in an 8 x 8 m arena."""
        base = {"arena": (8.0, 8.0), "human_count": 5}
        base.update(overrides)
        return cls(**base)


class DtaciConfig(_Frozen):
    alpha: float = Field(0.1, gt=0, lt=1)
    learning_rates: tuple[float, ...] = (0.05, 0.1, 0.2)
    initial_errors: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    sigma: float = Field(0.05, ge=0, le=1)
    eta: float = Field(1.0, ge=0)
    query_mode: QueryMode = QueryMode.SAMPLED

    @field_validator("learning_rates")
    @classmethod
    def _rates(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value or any(rate < 0 for rate in value):
            raise ValueError("learning_rates must be a nonempty tuple of non-negative rates")
        return value

    @property
    def horizon(self) -> int:
        return len(self.initial_errors)


class SafetyCostConfig(_Frozen):
    comfort_radius: float = Field(0.25, ge=0)
    cost_horizon: int = Field(2, ge=0, description="K': prediction steps that enter the cost")
    cost_scale: float = Field(2.5, ge=0, description="mu in C_t = mu * d_intru")
    success_reward: float = 10.0
    collision_penalty: float = -20.0
    potential_scale: float = 2.0
    danger_window: int = Field(2, ge=1)


class PolicyConfig(_Frozen):
    encoder_width: int = Field(32, ge=1)
    hidden_widths: tuple[int, int] = (64, 64)
    share_reward_trunk: bool = True
    log_std_init: float = -0.5
    log_std_bounds: tuple[float, float] = (-5.0, 2.0)
    init_scale: float = Field(1.0, gt=0)
    max_humans: int | None = Field(None, ge=0, description="Defaults to the scenario's human count")
    horizon: int = Field(5, ge=1)


class TrainerConfig(_Frozen):
    cost_limit: float = Field(0.4, ge=0)
    discount: float = Field(0.99, gt=0, le=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    clip_ratio: float = Field(0.08, gt=0, lt=1)
    actor_lr: float = Field(3e-5, gt=0)
    cost_critic_lr: float = Field(1.5e-5, gt=0)
    lambda_lr: float = Field(0.05, ge=0)
    lambda_init: float = Field(0.0, ge=0)
    reward_value_coef: float = Field(0.5, ge=0)
    cost_value_coef: float = Field(0.5, ge=0)
    epochs: int = Field(4, ge=1)
    minibatches: int = Field(4, ge=1)
    rollout_steps: int = Field(128, ge=1)
    num_envs: int = Field(16, ge=1)
    total_steps: int = Field(1_000_000, ge=1)
    normalize_advantages: bool = True
    max_grad_norm: float = Field(0.5, gt=0)
    variant: TrainingVariant = TrainingVariant.OURS

    @property
    def steps_per_iteration(self) -> int:
        return self.rollout_steps * self.num_envs

    @property
    def iterations(self) -> int:
        return max(1, self.total_steps // self.steps_per_iteration)

    @classmethod
    def desk_preset(cls, **overrides) -> "TrainerConfig":
        base = {"num_envs": 16, "total_steps": 1_000_000, "actor_lr": 3e-4, "cost_critic_lr": 1.5e-4}
        base.update(overrides)
        return cls(**base)

    @classmethod
    def full_preset(cls, **overrides) -> "TrainerConfig":
        base = {"num_envs": 128, "total_steps": 20_000_000}
        base.update(overrides)
        return cls(**base)


class MpcConfig(_Frozen):
    horizon: int = Field(5, ge=1)
    samples: int = Field(512, ge=1)
    collision_weight: float = Field(100.0, ge=0)
    uncertainty_weight: float = Field(10.0, ge=0)
    goal_weight: float = Field(1.0, ge=0)
    sampler: Literal["constant", "perturbed"] = "perturbed"
    perturbation_std: float = Field(0.2, ge=0)
    include_goal_candidate: bool = True


def load_scenario(path: Path | str) -> ScenarioConfig:
    """Load a ScenarioConfig from a JSON file.

    Raises:
        InputValidationError: If the file is not valid JSON or violates the model
    """
    path = Path(path)
    try:
        return ScenarioConfig.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise InputValidationError(f"Malformed scenario config {path}: {e}") from e


def config_hash(*models: BaseModel) -> str:
    """Stable sha256 over the canonical JSON of one or more config models."""
    payload = [model.model_dump(mode="json") for model in models]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class CampaignConfig(_Frozen):
    """Evaluation protocol: episodes per test seed, test seeds, and worker processes."""

    episodes: int = Field(50, ge=1)
    seeds: int = Field(5, ge=1)
    base_seed: int = 0
    workers: int = Field(1, ge=1)

    @property
    def test_seeds(self) -> list[int]:
        return list(range(self.base_seed, self.base_seed + self.seeds))

    @classmethod
    def full_protocol(cls, **overrides) -> "CampaignConfig":
        """5 test seeds x 250 episodes = 1250 samples."""
        base = {"episodes": 250, "seeds": 5}
        base.update(overrides)
        return cls(**base)


class RunManifest(BaseModel):
    """Everything needed to reconstruct one CLI run."""

    command: str
    config: dict[str, Any]
    seeds: list[int]
    code_version: str
    outputs: list[str] = Field(default_factory=list)
    started_at: str
    finished_at: str | None = None
    config_hash: str
