"""Reset/step environments for training, and a synchronous vector of them."""

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from crowd_safety_navigator.config import DtaciConfig, SafetyCostConfig, ScenarioConfig, TrainingVariant
from crowd_safety_navigator.errors import InputValidationError
from crowd_safety_navigator.learning.network import Observation, ObservationBatch, encode_observation, human_feature_size
from crowd_safety_navigator.safety.cost import SafetyAreas, build_safety_areas, step_signal
from crowd_safety_navigator.simulation.scenario import spawn_scenario
from crowd_safety_navigator.simulation.state import Event, Transition, WorldState
from crowd_safety_navigator.simulation.world import step_episode
from crowd_safety_navigator.uncertainty.dtaci import DtaciBank
from crowd_safety_navigator.uncertainty.prediction import PredictionSet, Predictor, build_predictor

logger = logging.getLogger(__name__)


@dataclass
class EnvStep:
    observation: Observation
    reward: float
    cost: float
    done: bool
    event: Event | None = None
    intrusion: float = 0.0
    transition: Transition | None = None


class Environment(Protocol):
    def reset(self, seed: int) -> Observation: ...

    def step(self, action: np.ndarray) -> EnvStep: ...


class CrowdNavEnvironment:
    """One crowd episode at a time: simulate, predict, calibrate, then score the step."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        dtaci: DtaciConfig = DtaciConfig(),
        cost: SafetyCostConfig = SafetyCostConfig(),
        max_humans: int | None = None,
        variant: TrainingVariant = TrainingVariant.OURS,
        predictor: str = "cv",
        noise_scale: float = 0.2,
    ) -> None:
        self.scenario = scenario
        self.dtaci = dtaci
        self.cost = cost
        self.horizon = dtaci.horizon
        self.max_humans = scenario.human_count if max_humans is None else max_humans
        self.variant = TrainingVariant(variant)
        self.predictor_name = predictor
        self.noise_scale = noise_scale
        if cost.cost_horizon > self.horizon:
            raise InputValidationError(
                f"cost horizon {cost.cost_horizon} exceeds prediction horizon {self.horizon}"
            )

        self.world: WorldState | None = None
        self.bank: DtaciBank | None = None
        self.predictor: Predictor | None = None
        self.predictions: PredictionSet | None = None
        self.uncertainty: np.ndarray | None = None
        self.areas: SafetyAreas | None = None
        self.query_rng = np.random.default_rng(0)

    @property
    def observation_size(self) -> int:
        return human_feature_size(self.horizon)

    def reset(self, seed: int) -> Observation:
        self.world = spawn_scenario(self.scenario, seed)
        self.bank = DtaciBank.create(self.dtaci, self.world.human_count)
        self.predictor = build_predictor(self.predictor_name, self.noise_scale, seed=seed)
        self.query_rng = np.random.default_rng([seed, 1])
        self._issue_predictions()
        return self.observation()

    def _issue_predictions(self) -> None:
        assert self.world is not None and self.bank is not None and self.predictor is not None
        self.predictions = self.predictor.predict(self.world, self.horizon)
        self.uncertainty = self.bank.issue(self.predictions, self.query_rng)
        self.areas = build_safety_areas(self.world, self.predictions, self.uncertainty, self.cost)

    def observation(self) -> Observation:
        assert self.world is not None
        return encode_observation(
            self.world,
            self.predictions,
            self.uncertainty,
            max_humans=self.max_humans,
            horizon=self.horizon,
            include_uncertainty=self.variant.uses_uncertainty,
        )

    def step(self, action: np.ndarray) -> EnvStep:
        assert self.world is not None and self.bank is not None
        transition = step_episode(self.world, action)
        self.bank.observe_world(self.world)
        self._issue_predictions()
        assert self.areas is not None
        signal = step_signal(transition, self.areas, self.cost)
        return EnvStep(
            observation=self.observation(),
            reward=signal.reward,
            cost=signal.cost,
            done=transition.event.is_terminal,
            event=transition.event,
            intrusion=signal.intrusion,
            transition=transition,
        )


class SyntheticCmdpEnvironment:
    """One-step problem with reward = cost = clip(action_x, 0, 1); no humans."""

    def __init__(self, horizon: int = 5) -> None:
        self.horizon = horizon
        self._observation = Observation(
            robot=np.zeros(7),
            humans=np.zeros((0, human_feature_size(horizon))),
            mask=np.zeros(0),
        )

    def reset(self, seed: int) -> Observation:
        return self._observation

    def step(self, action: np.ndarray) -> EnvStep:
        value = float(np.clip(np.asarray(action, dtype=float)[0], 0.0, 1.0))
        return EnvStep(observation=self._observation, reward=value, cost=value, done=True)


@dataclass
class EpisodeSummary:
    episode_return: float
    episode_cost: float
    length: int
    event: Event | None


@dataclass
class VectorStep:
    observations: ObservationBatch
    rewards: np.ndarray
    costs: np.ndarray
    dones: np.ndarray
    completed: list[EpisodeSummary]


class VectorEnvironment:
    """Steps N environments in lockstep and resets finished ones with fresh seeds.

    Each slot draws its episode seeds from its own child SeedSequence, so runs are reproducible
    independent of the order in which episodes end.
    """

    def __init__(self, envs: list[Environment], seed: int) -> None:
        if not envs:
            raise InputValidationError("vector environment needs at least one environment")
        self.envs = envs
        self._streams = np.random.SeedSequence(seed).spawn(len(envs))
        self._returns = np.zeros(len(envs))
        self._costs = np.zeros(len(envs))
        self._lengths = np.zeros(len(envs), dtype=int)
        self._observations: list[Observation] = []

    def __len__(self) -> int:
        return len(self.envs)

    def _next_seed(self, index: int) -> int:
        child = self._streams[index].spawn(1)[0]
        return int(child.generate_state(1)[0])

    def reset(self) -> ObservationBatch:
        self._observations = [env.reset(self._next_seed(i)) for i, env in enumerate(self.envs)]
        self._returns[:] = 0.0
        self._costs[:] = 0.0
        self._lengths[:] = 0
        return ObservationBatch.stack(self._observations)

    def step(self, actions: np.ndarray) -> VectorStep:
        rewards = np.zeros(len(self.envs))
        costs = np.zeros(len(self.envs))
        dones = np.zeros(len(self.envs), dtype=bool)
        completed: list[EpisodeSummary] = []
        for i, env in enumerate(self.envs):
            result = env.step(actions[i])
            rewards[i], costs[i], dones[i] = result.reward, result.cost, result.done
            self._returns[i] += result.reward
            self._costs[i] += result.cost
            self._lengths[i] += 1
            if result.done:
                completed.append(
                    EpisodeSummary(float(self._returns[i]), float(self._costs[i]), int(self._lengths[i]), result.event)
                )
                self._returns[i] = self._costs[i] = 0.0
                self._lengths[i] = 0
                self._observations[i] = env.reset(self._next_seed(i))
            else:
                self._observations[i] = result.observation
        return VectorStep(ObservationBatch.stack(self._observations), rewards, costs, dones, completed)
