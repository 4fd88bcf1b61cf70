"""K-step human trajectory predictors behind one interface."""

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from crowd_safety_navigator.errors import InputValidationError
from crowd_safety_navigator.simulation.state import WorldState
from crowd_safety_navigator.simulation.world import rollout_humans

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """World-frame prediction grid; ``points[h, k - 1]`` is human h's position predicted k steps ahead."""

    points: np.ndarray
    issued_at: int

    def __post_init__(self) -> None:
        if self.points.ndim != 3 or self.points.shape[-1] != 2 or self.points.shape[1] < 1:
            raise InputValidationError(f"prediction points must have shape (H, K>=1, 2), got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise InputValidationError("prediction points must be finite")

    @property
    def horizon(self) -> int:
        return int(self.points.shape[1])

    @property
    def human_count(self) -> int:
        return int(self.points.shape[0])


class Predictor(Protocol):
    """Anything that turns the current world into a K-step PredictionSet."""

    def predict(self, world: WorldState, horizon: int) -> PredictionSet: ...


def constant_velocity_points(positions: np.ndarray, velocities: np.ndarray, dt: float, horizon: int) -> np.ndarray:
    """p + k * dt * v for k = 1..horizon, shape (H, horizon, 2)."""
    if horizon < 1:
        raise InputValidationError(f"prediction horizon must be >= 1, got {horizon}")
    steps = np.arange(1, horizon + 1, dtype=float)[None, :, None]
    return positions[:, None, :] + steps * dt * velocities[:, None, :]


def cv_predict(world: WorldState, K: int) -> PredictionSet:
    """Constant-velocity extrapolation of every human."""
    points = constant_velocity_points(world.human_positions, world.human_velocities, world.dt, K)
    return PredictionSet(points=points, issued_at=world.step_index)


def noisy_oracle_predict(
    world: WorldState,
    K: int,
    future: np.ndarray,
    noise_scale: float,
    rng: np.random.Generator,
) -> PredictionSet:
    """Ground-truth future positions plus isotropic Gaussian noise.

    Args:
        world: Current world (for issue time and human count)
        K: Prediction horizon
        future: Ground-truth positions, shape (n >= K, H, 2)
        noise_scale: Per-axis standard deviation of the noise (m)
        rng: Noise stream

    Raises:
        InputValidationError: If the future is shorter than K or has the wrong shape
    """
    if K < 1:
        raise InputValidationError(f"prediction horizon must be >= 1, got {K}")
    future = np.asarray(future, dtype=float)
    if future.ndim != 3 or future.shape[1:] != (world.human_count, 2):
        raise InputValidationError(f"future must have shape (n, {world.human_count}, 2), got {future.shape}")
    if future.shape[0] < K:
        raise InputValidationError(f"future covers {future.shape[0]} steps, fewer than horizon {K}")
    points = np.transpose(future[:K], (1, 0, 2)).copy()
    if noise_scale > 0:
        points = points + rng.normal(0.0, noise_scale, size=points.shape)
    return PredictionSet(points=points, issued_at=world.step_index)


class ConstantVelocityPredictor:
    """Rule-based predictor: extrapolate current velocities."""

    name = "cv"

    def predict(self, world: WorldState, horizon: int) -> PredictionSet:
        return cv_predict(world, horizon)


class NoisyOraclePredictor:
    """Simulation-only predictor that perturbs the true future.

    Near the end of an episode the true future is shorter than the horizon; the last available
    frame (or the current positions) is repeated to fill it.
    """

    name = "noisy_oracle"

    def __init__(self, noise_scale: float, seed: int = 0) -> None:
        if noise_scale < 0:
            raise InputValidationError(f"noise_scale must be non-negative, got {noise_scale}")
        self.noise_scale = noise_scale
        self.rng = np.random.default_rng(seed)

    def predict(self, world: WorldState, horizon: int) -> PredictionSet:
        future = rollout_humans(world, horizon)
        if future.shape[0] < horizon:
            last = future[-1] if future.shape[0] else world.human_positions
            padding = np.repeat(last[None], horizon - future.shape[0], axis=0)
            future = np.concatenate([future, padding], axis=0) if future.shape[0] else padding
        return noisy_oracle_predict(world, horizon, future, self.noise_scale, self.rng)


def build_predictor(name: str, noise_scale: float = 0.2, seed: int = 0) -> Predictor:
    """Resolve a predictor by name ("cv" or "noisy_oracle")."""
    if name == ConstantVelocityPredictor.name:
        return ConstantVelocityPredictor()
    if name == NoisyOraclePredictor.name:
        return NoisyOraclePredictor(noise_scale=noise_scale, seed=seed)
    raise InputValidationError(f"Unknown predictor '{name}'. Supported: cv, noisy_oracle")
