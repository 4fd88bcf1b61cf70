"""PPO-Lagrangian: rollouts, per-channel GAE, combined advantage, clipped updates and the dual step."""

import csv
import json
import logging
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import structlog

from crowd_safety_navigator.config import (
    DtaciConfig,
    PolicyConfig,
    SafetyCostConfig,
    ScenarioConfig,
    TrainerConfig,
    config_hash,
)
from crowd_safety_navigator.errors import InputValidationError, TrainingDivergedError
from crowd_safety_navigator.learning.checkpoint import save_checkpoint
from crowd_safety_navigator.learning.environment import (
    CrowdNavEnvironment,
    Environment,
    EpisodeSummary,
    VectorEnvironment,
)
from crowd_safety_navigator.learning.network import (
    Adam,
    LossSpec,
    LossValues,
    Minibatch,
    ObservationBatch,
    PolicyParams,
    evaluate_losses,
    forward_batch,
    init_policy_params,
    log_prob_and_entropy,
    sample_actions,
)

logger = logging.getLogger(__name__)
log = structlog.get_logger(__name__)


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    discount: float,
    gae_lambda: float,
    last_value: np.ndarray | float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets along axis 0.

    ``dones[t]`` marks that the episode ended with step t; nothing is bootstrapped across it.
    ``last_value`` bootstraps the step after the window.

    Raises:
        InputValidationError: If the sequences are not aligned
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise InputValidationError(
            f"GAE inputs must be aligned, got rewards {rewards.shape}, values {values.shape}, dones {dones.shape}"
        )
    advantages = np.zeros_like(rewards)
    last_gae = np.zeros(rewards.shape[1:])
    for t in reversed(range(rewards.shape[0])):
        next_values = values[t + 1] if t + 1 < rewards.shape[0] else last_value
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + discount * next_values * nonterminal - values[t]
        last_gae = delta + discount * gae_lambda * nonterminal * last_gae
        advantages[t] = last_gae
    return advantages, advantages + values


def normalize(advantages: np.ndarray) -> np.ndarray:
    """Zero mean, unit std over the whole batch."""
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)


def combined_advantage(reward_adv: np.ndarray, cost_adv: np.ndarray, lagrange_multiplier: float) -> np.ndarray:
    """(A^R - lambda A^C) / (1 + lambda)."""
    if lagrange_multiplier < 0:
        raise InputValidationError(f"Lagrange multiplier must be non-negative, got {lagrange_multiplier}")
    return (np.asarray(reward_adv) - lagrange_multiplier * np.asarray(cost_adv)) / (1.0 + lagrange_multiplier)


def lambda_update(lagrange_multiplier: float, mean_episode_cost: float, cost_limit: float, rate: float) -> float:
    """Projected descent on -lambda (C - d): lambda grows while the limit is exceeded."""
    return max(0.0, lagrange_multiplier + rate * (mean_episode_cost - cost_limit))


@dataclass
class RolloutBatch:
    """One rollout window; per-step arrays are shaped (T, E, ...)."""

    robot: np.ndarray
    humans: np.ndarray
    mask: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    reward_values: np.ndarray
    cost_values: np.ndarray
    dones: np.ndarray
    last_reward_values: np.ndarray
    last_cost_values: np.ndarray
    episodes: list[EpisodeSummary] = field(default_factory=list)

    @property
    def episode_costs(self) -> list[float]:
        return [episode.episode_cost for episode in self.episodes]

    @property
    def episode_returns(self) -> list[float]:
        return [episode.episode_return for episode in self.episodes]

    @property
    def size(self) -> int:
        return int(self.rewards.size)


@dataclass
class TrainingBatch:
    """Flattened rollout with per-channel advantages and critic targets."""

    observations: ObservationBatch
    actions: np.ndarray
    old_log_probs: np.ndarray
    reward_advantages: np.ndarray
    cost_advantages: np.ndarray
    reward_targets: np.ndarray
    cost_targets: np.ndarray

    def minibatch(self, index: np.ndarray, lagrange_multiplier: float) -> Minibatch:
        return Minibatch(
            observations=self.observations.take(index),
            actions=self.actions[index],
            old_log_probs=self.old_log_probs[index],
            advantages=combined_advantage(
                self.reward_advantages[index], self.cost_advantages[index], lagrange_multiplier
            ),
            reward_targets=self.reward_targets[index],
            cost_targets=self.cost_targets[index],
        )

    def __len__(self) -> int:
        return int(self.actions.shape[0])


def collect_rollout(
    vec: VectorEnvironment,
    params: PolicyParams,
    observations: ObservationBatch,
    steps: int,
    rng: np.random.Generator,
) -> tuple[RolloutBatch, ObservationBatch]:
    """Run the frozen policy for ``steps`` lockstep steps. Log-probs are of the pre-clamp actions."""
    columns: dict[str, list[np.ndarray]] = {
        name: []
        for name in (
            "robot",
            "humans",
            "mask",
            "actions",
            "log_probs",
            "rewards",
            "costs",
            "reward_values",
            "cost_values",
            "dones",
        )
    }
    episodes: list[EpisodeSummary] = []
    for _ in range(steps):
        out = forward_batch(params, observations)
        actions = sample_actions(out.mean, out.log_std, rng)
        log_probs, _ = log_prob_and_entropy(out.mean, out.log_std, actions)
        result = vec.step(actions)
        for name, value in (
            ("robot", observations.robot),
            ("humans", observations.humans),
            ("mask", observations.mask),
            ("actions", actions),
            ("log_probs", log_probs),
            ("rewards", result.rewards),
            ("costs", result.costs),
            ("reward_values", out.reward_value),
            ("cost_values", out.cost_value),
            ("dones", result.dones.astype(float)),
        ):
            columns[name].append(value)
        episodes.extend(result.completed)
        observations = result.observations

    last = forward_batch(params, observations)
    stacked = {name: np.stack(values) for name, values in columns.items()}
    batch = RolloutBatch(
        **stacked,
        last_reward_values=last.reward_value,
        last_cost_values=last.cost_value,
        episodes=episodes,
    )
    return batch, observations


def prepare_batch(rollout: RolloutBatch, config: TrainerConfig) -> TrainingBatch:
    """GAE for both channels, optional per-channel normalization, then flatten (T, E) to (T*E)."""
    reward_adv, reward_targets = compute_gae(
        rollout.rewards, rollout.reward_values, rollout.dones, config.discount, config.gae_lambda,
        rollout.last_reward_values,
    )
    cost_adv, cost_targets = compute_gae(
        rollout.costs, rollout.cost_values, rollout.dones, config.discount, config.gae_lambda,
        rollout.last_cost_values,
    )
    if config.normalize_advantages:
        reward_adv = normalize(reward_adv)
        cost_adv = normalize(cost_adv)

    def flat(array: np.ndarray) -> np.ndarray:
        return array.reshape((array.shape[0] * array.shape[1],) + array.shape[2:])

    return TrainingBatch(
        observations=ObservationBatch(flat(rollout.robot), flat(rollout.humans), flat(rollout.mask)),
        actions=flat(rollout.actions),
        old_log_probs=flat(rollout.log_probs),
        reward_advantages=flat(reward_adv),
        cost_advantages=flat(cost_adv),
        reward_targets=flat(reward_targets),
        cost_targets=flat(cost_targets),
    )


def losses(
    batch: TrainingBatch,
    params: PolicyParams,
    lagrange_multiplier: float,
    clip_ratio: float,
    reward_coef: float,
    cost_coef: float,
) -> LossValues:
    """(l^pi, l^R, l^C) over the whole batch, without gradients."""
    minibatch = batch.minibatch(np.arange(len(batch)), lagrange_multiplier)
    values, _ = evaluate_losses(
        params, minibatch, LossSpec.training(), clip_ratio, reward_coef, cost_coef, with_grads=False
    )
    return values


@dataclass
class CurveRow:
    iteration: int
    env_steps: int
    episodes: int
    mean_reward: float
    mean_cost: float
    lagrange_multiplier: float
    pi_loss: float
    reward_loss: float
    cost_loss: float

    def csv_row(self) -> list[int | float]:
        return [getattr(self, name) for name in CURVE_FIELDS]


CURVE_COLUMNS = (
    "iteration",
    "mean_reward",
    "mean_cost",
    "lambda",
    "env_steps",
    "episodes",
    "pi_loss",
    "reward_loss",
    "cost_loss",
)
# CurveRow attribute behind each CSV column.
CURVE_FIELDS = tuple("lagrange_multiplier" if column == "lambda" else column for column in CURVE_COLUMNS)


@dataclass
class TrainingResult:
    params: PolicyParams
    lagrange_multiplier: float
    curves: list[CurveRow]
    checkpoint_path: Path | None = None
    curves_path: Path | None = None


def _dump_divergence(out_dir: Path | None, iteration: int, lagrange_multiplier: float, values: LossValues) -> Path | None:
    if out_dir is None:
        return None
    path = Path(out_dir) / "divergence_dump.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps({"iteration": iteration, "lagrange_multiplier": lagrange_multiplier, "losses": asdict(values)}, indent=2),
        encoding="utf-8",
    )
    return path


def _update(
    params: PolicyParams,
    batch: TrainingBatch,
    lagrange_multiplier: float,
    config: TrainerConfig,
    optimizers: tuple[Adam, Adam],
    rng: np.random.Generator,
    iteration: int,
    out_dir: Path | None,
) -> LossValues:
    spec = LossSpec.training()
    last: LossValues | None = None
    for _ in range(config.epochs):
        order = rng.permutation(len(batch))
        for index in np.array_split(order, min(config.minibatches, len(batch))):
            minibatch = batch.minibatch(index, lagrange_multiplier)
            values, grads = evaluate_losses(
                params, minibatch, spec, config.clip_ratio, config.reward_value_coef, config.cost_value_coef
            )
            assert grads is not None
            finite = np.isfinite([values.pi, values.reward, values.cost]).all() and all(
                np.all(np.isfinite(g)) for g in grads.values()
            )
            if not finite:
                dump = _dump_divergence(out_dir, iteration, lagrange_multiplier, values)
                log.error("training_diverged", iteration=iteration, dump_path=str(dump) if dump else None)
                raise TrainingDivergedError(
                    f"Non-finite loss at iteration {iteration}: pi={values.pi}, R={values.reward}, C={values.cost}",
                    dump_path=dump,
                )
            for optimizer in optimizers:
                optimizer.step(params.arrays, grads)
            last = values
    assert last is not None
    return last


def write_curves_csv(curves: list[CurveRow], path: Path | str) -> Path:
    """Fixed column order and repr-exact floats, so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        writer.writerows(row.csv_row() for row in curves)
    return path


def train(
    scenario: ScenarioConfig,
    trainer: TrainerConfig,
    policy: PolicyConfig = PolicyConfig(),
    dtaci: DtaciConfig = DtaciConfig(),
    cost: SafetyCostConfig = SafetyCostConfig(),
    seed: int = 0,
    out_dir: Path | str | None = None,
    env_factory: Callable[[], Environment] | None = None,
    on_iteration: Callable[[CurveRow], None] | None = None,
) -> TrainingResult:
    """Alternate rollout collection with PPO-Lagrangian updates.

    Args:
        scenario: Crowd scenario the default environments run
        trainer: Optimization settings, including the training variant
        policy: Network settings; its horizon must match the DtACI horizon
        dtaci: Conformal bank settings
        cost: Safety cost and reward settings
        seed: Root seed for parameters, episodes and action noise
        out_dir: Where the checkpoint and curves CSV go (nothing is written when None)
        env_factory: Builds one environment per vector slot (defaults to the crowd environment)
        on_iteration: Called with every curve row

    Returns:
        TrainingResult with final parameters, multiplier and curves

    Raises:
        TrainingDivergedError: If any loss or gradient becomes non-finite
    """
    if policy.horizon != dtaci.horizon:
        raise InputValidationError(f"policy horizon {policy.horizon} != DtACI horizon {dtaci.horizon}")
    out_path = Path(out_dir) if out_dir is not None else None
    variant = trainer.variant
    max_humans = policy.max_humans if policy.max_humans is not None else scenario.human_count

    def make_env() -> Environment:
        if env_factory is not None:
            return env_factory()
        return CrowdNavEnvironment(scenario, dtaci, cost, max_humans=max_humans, variant=variant)

    init_seq, env_seq, noise_seq = np.random.SeedSequence(seed).spawn(3)
    params = init_policy_params(policy, np.random.default_rng(init_seq))
    rng = np.random.default_rng(noise_seq)
    vec = VectorEnvironment([make_env() for _ in range(trainer.num_envs)], seed=int(env_seq.generate_state(1)[0]))

    actor_keys = [key for key in params.arrays if not key.startswith("cost.")]
    cost_keys = [key for key in params.arrays if key.startswith("cost.")]
    optimizers = (
        Adam(actor_keys, trainer.actor_lr, max_grad_norm=trainer.max_grad_norm),
        Adam(cost_keys, trainer.cost_critic_lr, max_grad_norm=trainer.max_grad_norm),
    )

    lagrange_multiplier = trainer.lambda_init if variant.constrained else 0.0
    curves: list[CurveRow] = []
    observations = vec.reset()
    logger.info(
        f"Training {variant.value}: iterations={trainer.iterations}, envs={trainer.num_envs}, "
        f"rollout={trainer.rollout_steps}, cost_limit={trainer.cost_limit}"
    )

    for iteration in range(trainer.iterations):
        rollout, observations = collect_rollout(vec, params, observations, trainer.rollout_steps, rng)
        batch = prepare_batch(rollout, trainer)

        if variant.constrained and rollout.episodes:
            lagrange_multiplier = lambda_update(
                lagrange_multiplier, float(np.mean(rollout.episode_costs)), trainer.cost_limit, trainer.lambda_lr
            )

        values = _update(params, batch, lagrange_multiplier, trainer, optimizers, rng, iteration, out_path)

        row = CurveRow(
            iteration=iteration,
            env_steps=(iteration + 1) * trainer.steps_per_iteration,
            episodes=len(rollout.episodes),
            mean_reward=float(np.mean(rollout.episode_returns)) if rollout.episodes else float("nan"),
            mean_cost=float(np.mean(rollout.episode_costs)) if rollout.episodes else float("nan"),
            lagrange_multiplier=float(lagrange_multiplier),
            pi_loss=values.pi,
            reward_loss=values.reward,
            cost_loss=values.cost,
        )
        curves.append(row)
        log.info(
            "iteration_complete",
            iteration=iteration,
            episodes=row.episodes,
            mean_reward=row.mean_reward,
            mean_cost=row.mean_cost,
            lagrange_multiplier=row.lagrange_multiplier,
        )
        if on_iteration is not None:
            on_iteration(row)

    result = TrainingResult(params=params, lagrange_multiplier=lagrange_multiplier, curves=curves)
    if out_path is not None:
        digest = config_hash(scenario, trainer, policy, dtaci, cost)
        result.checkpoint_path = save_checkpoint(
            out_path / "checkpoint.json",
            params,
            variant,
            digest,
            max_humans=max_humans,
            metadata={"seed": seed, "lagrange_multiplier": lagrange_multiplier, "cost_limit": trainer.cost_limit},
        )
        result.curves_path = write_curves_csv(curves, out_path / "curves.csv")
    logger.info(f"Training finished: lambda={lagrange_multiplier:.4f}")
    return result
