"""Permutation-invariant actor / twin-critic network with exact reverse-mode gradients.

Each tower encodes every human block with a tanh layer, mean-pools over the present humans,
concatenates the robot block and applies two tanh layers. The actor tower feeds the Gaussian
mean head; the reward critic either shares it or owns a tower; the cost critic always owns one.

Parameter keys are namespaced: ``actor.*`` (policy), ``reward.*`` (reward critic), ``cost.*``
(cost critic).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from crowd_safety_navigator.config import PolicyConfig
from crowd_safety_navigator.errors import InputValidationError, ShapeMismatchError
from crowd_safety_navigator.simulation.state import WorldState
from crowd_safety_navigator.uncertainty.prediction import PredictionSet

logger = logging.getLogger(__name__)

ROBOT_FEATURES = 7
LOG_2PI = math.log(2.0 * math.pi)


def human_feature_size(horizon: int) -> int:
    """relative position (2), relative velocity (2), radius (1), K points (2K), K radii (K)."""
    return 5 + 3 * horizon


@dataclass(frozen=True, eq=False)
class Observation:
    robot: np.ndarray  # (7,)
    humans: np.ndarray  # (N, D)
    mask: np.ndarray  # (N,)

    @property
    def human_slots(self) -> int:
        return int(self.humans.shape[0])


@dataclass(frozen=True, eq=False)
class ObservationBatch:
    robot: np.ndarray  # (B, 7)
    humans: np.ndarray  # (B, N, D)
    mask: np.ndarray  # (B, N)

    @classmethod
    def stack(cls, observations: list[Observation]) -> "ObservationBatch":
        return cls(
            robot=np.stack([obs.robot for obs in observations]),
            humans=np.stack([obs.humans for obs in observations]),
            mask=np.stack([obs.mask for obs in observations]),
        )

    def __len__(self) -> int:
        return int(self.robot.shape[0])

    def take(self, index: np.ndarray) -> "ObservationBatch":
        return ObservationBatch(self.robot[index], self.humans[index], self.mask[index])


def encode_observation(
    world: WorldState,
    predictions: PredictionSet | None,
    uncertainty: np.ndarray | None,
    max_humans: int | None = None,
    horizon: int = 5,
    include_uncertainty: bool = True,
) -> Observation:
    """Robot-centric (translated, world-aligned) observation; humans sorted nearest first.

    Humans beyond ``max_humans`` are dropped farthest first; empty slots are zero with mask 0.
    """
    robot = world.robot
    slots = world.human_count if max_humans is None else max_humans
    size = human_feature_size(horizon)

    to_goal = robot.goal - robot.position
    distance = float(np.linalg.norm(to_goal))
    speed = float(np.linalg.norm(robot.velocity))
    if speed > 1e-9:
        heading = math.atan2(robot.velocity[1], robot.velocity[0])
    elif distance > 1e-9:
        heading = math.atan2(to_goal[1], to_goal[0])
    else:
        heading = 0.0
    robot_block = np.array(
        [robot.velocity[0], robot.velocity[1], math.cos(heading), math.sin(heading), to_goal[0], to_goal[1], distance]
    )

    humans = np.zeros((slots, size))
    mask = np.zeros(slots)
    if world.human_count and slots:
        if predictions is None or predictions.horizon < horizon:
            raise InputValidationError(f"observation needs predictions of horizon {horizon}")
        relative = world.human_positions - robot.position
        order = np.argsort(np.linalg.norm(relative, axis=1), kind="stable")[:slots]
        grid = np.zeros((world.human_count, horizon)) if uncertainty is None else np.asarray(uncertainty, dtype=float)
        for slot, h in enumerate(order):
            points = (predictions.points[h, :horizon] - robot.position).reshape(-1)
            radii = grid[h, :horizon] if include_uncertainty else np.zeros(horizon)
            humans[slot] = np.concatenate(
                [relative[h], world.humans[h].velocity - robot.velocity, [world.humans[h].radius], points, radii]
            )
            mask[slot] = 1.0
    return Observation(robot=robot_block, humans=humans, mask=mask)


@dataclass
class PolicyParams:
    config: PolicyConfig
    input_size: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def reward_tower(self) -> str:
        return "actor" if self.config.share_reward_trunk else "reward"

    @property
    def towers(self) -> list[str]:
        return ["actor", "cost"] if self.config.share_reward_trunk else ["actor", "reward", "cost"]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.config, self.input_size, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def init_policy_params(config: PolicyConfig, rng: np.random.Generator) -> PolicyParams:
    """Scaled-normal weights, zero biases; the mean head starts near zero."""
    input_size = human_feature_size(config.horizon)
    width = config.encoder_width
    h1, h2 = config.hidden_widths
    params = PolicyParams(config=config, input_size=input_size)

    def dense(rows: int, cols: int, gain: float = 1.0) -> np.ndarray:
        return rng.normal(0.0, config.init_scale * gain / math.sqrt(cols), size=(rows, cols))

    for tower in params.towers:
        params.arrays[f"{tower}.enc_w"] = dense(width, input_size)
        params.arrays[f"{tower}.enc_b"] = np.zeros(width)
        params.arrays[f"{tower}.w1"] = dense(h1, ROBOT_FEATURES + width)
        params.arrays[f"{tower}.b1"] = np.zeros(h1)
        params.arrays[f"{tower}.w2"] = dense(h2, h1)
        params.arrays[f"{tower}.b2"] = np.zeros(h2)
    params.arrays["actor.mean_w"] = dense(2, h2, gain=0.01)
    params.arrays["actor.mean_b"] = np.zeros(2)
    params.arrays["actor.log_std"] = np.full(2, config.log_std_init)
    params.arrays["reward.value_w"] = dense(1, h2)
    params.arrays["reward.value_b"] = np.zeros(1)
    params.arrays["cost.value_w"] = dense(1, h2)
    params.arrays["cost.value_b"] = np.zeros(1)
    return params


@dataclass
class _TowerCache:
    humans: np.ndarray
    mask: np.ndarray
    count: np.ndarray
    encoded: np.ndarray
    joined: np.ndarray
    hidden1: np.ndarray
    hidden2: np.ndarray


@dataclass
class PolicyOutput:
    mean: np.ndarray  # (B, 2)
    log_std: np.ndarray  # (2,)
    reward_value: np.ndarray  # (B,)
    cost_value: np.ndarray  # (B,)
    caches: dict[str, _TowerCache] = field(default_factory=dict, repr=False)


def _tower_forward(arrays: dict[str, np.ndarray], tower: str, batch: ObservationBatch) -> _TowerCache:
    encoded = np.tanh(batch.humans @ arrays[f"{tower}.enc_w"].T + arrays[f"{tower}.enc_b"])
    count = np.maximum(batch.mask.sum(axis=1), 1.0)
    pooled = (encoded * batch.mask[..., None]).sum(axis=1) / count[:, None]
    joined = np.concatenate([batch.robot, pooled], axis=1)
    hidden1 = np.tanh(joined @ arrays[f"{tower}.w1"].T + arrays[f"{tower}.b1"])
    hidden2 = np.tanh(hidden1 @ arrays[f"{tower}.w2"].T + arrays[f"{tower}.b2"])
    return _TowerCache(batch.humans, batch.mask, count, encoded, joined, hidden1, hidden2)


def _tower_backward(
    arrays: dict[str, np.ndarray],
    tower: str,
    cache: _TowerCache,
    d_hidden2: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    d_pre2 = d_hidden2 * (1.0 - cache.hidden2**2)
    grads[f"{tower}.w2"] += d_pre2.T @ cache.hidden1
    grads[f"{tower}.b2"] += d_pre2.sum(axis=0)
    d_pre1 = (d_pre2 @ arrays[f"{tower}.w2"]) * (1.0 - cache.hidden1**2)
    grads[f"{tower}.w1"] += d_pre1.T @ cache.joined
    grads[f"{tower}.b1"] += d_pre1.sum(axis=0)
    d_pooled = (d_pre1 @ arrays[f"{tower}.w1"])[:, ROBOT_FEATURES:]
    d_encoded = d_pooled[:, None, :] * (cache.mask / cache.count[:, None])[..., None]
    d_pre = d_encoded * (1.0 - cache.encoded**2)
    grads[f"{tower}.enc_w"] += np.einsum("bne,bnd->ed", d_pre, cache.humans)
    grads[f"{tower}.enc_b"] += d_pre.sum(axis=(0, 1))


def _as_batch(params: PolicyParams, obs: Observation | ObservationBatch) -> tuple[ObservationBatch, bool]:
    single = isinstance(obs, Observation)
    batch = ObservationBatch(obs.robot[None], obs.humans[None], obs.mask[None]) if single else obs
    if batch.robot.ndim != 2 or batch.robot.shape[1] != ROBOT_FEATURES:
        raise ShapeMismatchError(f"robot block must have {ROBOT_FEATURES} features, got shape {batch.robot.shape}")
    if batch.humans.ndim != 3 or batch.humans.shape[2] != params.input_size:
        raise ShapeMismatchError(
            f"human blocks must have {params.input_size} features, got shape {batch.humans.shape}"
        )
    if batch.mask.shape != batch.humans.shape[:2] or batch.robot.shape[0] != batch.humans.shape[0]:
        raise ShapeMismatchError("observation batch parts disagree on batch size or slot count")
    return batch, single


def forward_batch(params: PolicyParams, batch: ObservationBatch) -> PolicyOutput:
    arrays = params.arrays
    caches = {tower: _tower_forward(arrays, tower, batch) for tower in params.towers}
    actor = caches["actor"].hidden2
    reward = caches[params.reward_tower].hidden2
    low, high = params.config.log_std_bounds
    return PolicyOutput(
        mean=actor @ arrays["actor.mean_w"].T + arrays["actor.mean_b"],
        log_std=np.clip(arrays["actor.log_std"], low, high),
        reward_value=(reward @ arrays["reward.value_w"].T + arrays["reward.value_b"])[:, 0],
        cost_value=(caches["cost"].hidden2 @ arrays["cost.value_w"].T + arrays["cost.value_b"])[:, 0],
        caches=caches,
    )


def policy_forward(
    params: PolicyParams, obs: Observation | ObservationBatch
) -> tuple[np.ndarray, np.ndarray, np.ndarray | float, np.ndarray | float]:
    """(action mean, action log-std, V^R, V^C); unbatched outputs for a single Observation.

    Raises:
        ShapeMismatchError: If the observation does not fit the network
    """
    batch, single = _as_batch(params, obs)
    out = forward_batch(params, batch)
    if single:
        return out.mean[0], out.log_std, float(out.reward_value[0]), float(out.cost_value[0])
    return out.mean, out.log_std, out.reward_value, out.cost_value


def log_prob_and_entropy(
    mean: np.ndarray, log_std: np.ndarray, action: np.ndarray
) -> tuple[np.ndarray | float, float]:
    """Diagonal Gaussian log-density of ``action`` (summed over the last axis) and entropy."""
    mean = np.asarray(mean, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    action = np.asarray(action, dtype=float)
    z = (action - mean) / np.exp(log_std)
    log_prob = -0.5 * np.sum(z**2, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * LOG_2PI
    entropy = float(np.sum(0.5 + 0.5 * LOG_2PI + log_std))
    return (float(log_prob) if np.ndim(log_prob) == 0 else log_prob), entropy


def sample_actions(mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


@dataclass(frozen=True)
class LossSpec:
    """Weights of (l^pi, l^R, l^C) in the differentiated objective."""

    pi: float = 0.0
    reward: float = 0.0
    cost: float = 0.0

    @classmethod
    def training(cls) -> "LossSpec":
        """Descend -l^pi + l^R + l^C: ascend the clipped surrogate, fit both critics."""
        return cls(pi=-1.0, reward=1.0, cost=1.0)


@dataclass(frozen=True, eq=False)
class Minibatch:
    observations: ObservationBatch
    actions: np.ndarray  # (B, 2), pre-clamp
    old_log_probs: np.ndarray  # (B,)
    advantages: np.ndarray  # (B,) combined
    reward_targets: np.ndarray  # (B,)
    cost_targets: np.ndarray  # (B,)


@dataclass(frozen=True)
class LossValues:
    pi: float
    reward: float
    cost: float
    objective: float
    approx_kl: float = 0.0
    clip_fraction: float = 0.0


def evaluate_losses(
    params: PolicyParams,
    minibatch: Minibatch,
    spec: LossSpec,
    clip_ratio: float = 0.08,
    reward_coef: float = 0.5,
    cost_coef: float = 0.5,
    with_grads: bool = True,
) -> tuple[LossValues, dict[str, np.ndarray] | None]:
    """Clipped surrogate l^pi, critic losses l^R and l^C, and the gradient of their weighted sum.

    l^pi = mean(min(r A, clip(r, 1 - eps, 1 + eps) A)); l^R = c1 mean((V^R - target)^2);
    l^C = c2 mean((V^C - target)^2); objective = spec.pi l^pi + spec.reward l^R + spec.cost l^C.
    """
    batch, _ = _as_batch(params, minibatch.observations)
    size = len(batch)
    out = forward_batch(params, batch)
    arrays = params.arrays

    std = np.exp(out.log_std)
    residual = minibatch.actions - out.mean
    log_prob, _ = log_prob_and_entropy(out.mean, out.log_std, minibatch.actions)
    log_ratio = log_prob - minibatch.old_log_probs
    ratio = np.exp(log_ratio)
    advantages = minibatch.advantages
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    pi_loss = float(np.mean(np.minimum(unclipped, clipped)))

    reward_error = out.reward_value - minibatch.reward_targets
    cost_error = out.cost_value - minibatch.cost_targets
    reward_loss = float(reward_coef * np.mean(reward_error**2))
    cost_loss = float(cost_coef * np.mean(cost_error**2))

    values = LossValues(
        pi=pi_loss,
        reward=reward_loss,
        cost=cost_loss,
        objective=spec.pi * pi_loss + spec.reward * reward_loss + spec.cost * cost_loss,
        approx_kl=float(np.mean((ratio - 1.0) - log_ratio)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > clip_ratio)),
    )
    if not with_grads:
        return values, None

    grads = params.zeros_like()

    # d l^pi / d log pi: zero wherever the clipped branch is the active minimum.
    active = unclipped <= clipped
    d_log_prob = spec.pi * np.where(active, advantages * ratio, 0.0) / size
    d_mean = d_log_prob[:, None] * residual / std**2
    d_log_std = np.sum(d_log_prob[:, None] * (residual**2 / std**2 - 1.0), axis=0)
    low, high = params.config.log_std_bounds
    raw = arrays["actor.log_std"]
    grads["actor.log_std"] += np.where((raw > low) & (raw < high), d_log_std, 0.0)

    actor_cache = out.caches["actor"]
    grads["actor.mean_w"] += d_mean.T @ actor_cache.hidden2
    grads["actor.mean_b"] += d_mean.sum(axis=0)
    d_actor_hidden = d_mean @ arrays["actor.mean_w"]

    d_reward = spec.reward * reward_coef * 2.0 * reward_error / size
    reward_cache = out.caches[params.reward_tower]
    grads["reward.value_w"] += d_reward[None, :] @ reward_cache.hidden2
    grads["reward.value_b"] += np.array([d_reward.sum()])
    d_reward_hidden = d_reward[:, None] @ arrays["reward.value_w"]

    if params.config.share_reward_trunk:
        _tower_backward(arrays, "actor", actor_cache, d_actor_hidden + d_reward_hidden, grads)
    else:
        _tower_backward(arrays, "actor", actor_cache, d_actor_hidden, grads)
        _tower_backward(arrays, "reward", reward_cache, d_reward_hidden, grads)

    d_cost = spec.cost * cost_coef * 2.0 * cost_error / size
    cost_cache = out.caches["cost"]
    grads["cost.value_w"] += d_cost[None, :] @ cost_cache.hidden2
    grads["cost.value_b"] += np.array([d_cost.sum()])
    _tower_backward(arrays, "cost", cost_cache, d_cost[:, None] @ arrays["cost.value_w"], grads)
    return values, grads


def policy_backward(
    params: PolicyParams,
    minibatch: Minibatch,
    spec: LossSpec,
    clip_ratio: float = 0.08,
    reward_coef: float = 0.5,
    cost_coef: float = 0.5,
) -> dict[str, np.ndarray]:
    """Exact gradient of ``spec``'s weighted loss with respect to every parameter."""
    _, grads = evaluate_losses(params, minibatch, spec, clip_ratio, reward_coef, cost_coef)
    assert grads is not None
    return grads


class Adam:
    """Adam over a subset of parameter keys, with global gradient-norm clipping."""

    def __init__(
        self,
        keys: list[str],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        max_grad_norm: float | None = None,
    ) -> None:
        self.keys = list(keys)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> float:
        """Descend one step in place; returns the pre-clip gradient norm."""
        norm = math.sqrt(sum(float(np.sum(grads[k] ** 2)) for k in self.keys))
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for key in self.keys:
            grad = grads[key] * scale
            m = self.m.get(key, np.zeros_like(grad))
            v = self.v.get(key, np.zeros_like(grad))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad**2
            self.m[key], self.v[key] = m, v
            arrays[key] = arrays[key] - self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        return norm
