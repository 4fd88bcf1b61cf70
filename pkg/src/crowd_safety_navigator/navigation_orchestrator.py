"""Episode orchestrator wiring environment, conformal layer, safety cost and a planner."""

import logging
import os
from typing import Dict, List

import numpy as np
import structlog

from crowd_safety_navigator.config import DtaciConfig, SafetyCostConfig, ScenarioConfig, config_hash
from crowd_safety_navigator.errors import CrowdNavError, InputValidationError
from crowd_safety_navigator.learning.environment import CrowdNavEnvironment
from crowd_safety_navigator.metrics.trace import EpisodeTrace, StepRecord, TraceHeader, annotate_danger
from crowd_safety_navigator.planners.policies import LearnedPolicy, Planner, PlanningContext
from crowd_safety_navigator.uncertainty.dtaci import CoverageTrace, DtaciBank
from crowd_safety_navigator.uncertainty.prediction import PredictionSet, constant_velocity_points
from crowd_safety_navigator.validators.trace_validator import TraceValidator

logger = logging.getLogger(__name__)
log = structlog.get_logger(__name__)


class EpisodeRunner:
    """Parent orchestrator for crowd episodes."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        dtaci: DtaciConfig = DtaciConfig(),
        cost: SafetyCostConfig = SafetyCostConfig(),
        predictor: str = "cv",
        noise_scale: float = 0.2,
        env: Dict[str, str] | None = None,
    ) -> None:
        """Initialize episode runner.

        Args:
            scenario: Crowd scenario every episode is spawned from
            dtaci: Conformal bank settings
            cost: Safety cost, reward and danger-window settings
            predictor: Trajectory predictor name ("cv" or "noisy_oracle")
            noise_scale: Noise of the noisy oracle predictor (m)
            env: Environment variables (for feature flags)
        """
        self.scenario = scenario
        self.dtaci = dtaci
        self.cost = cost
        self.predictor = predictor
        self.noise_scale = noise_scale
        self.env = env or {}

        # Feature flags from environment
        self.strict_validation = os.getenv("CROWDNAV_STRICT_VALIDATION", "false").lower() == "true"
        self.record_predictions = os.getenv("CROWDNAV_RECORD_PREDICTIONS", "true").lower() == "true"

        # Override with provided env dict
        if env:
            self.strict_validation = env.get("CROWDNAV_STRICT_VALIDATION", str(self.strict_validation)).lower() == "true"
            self.record_predictions = env.get("CROWDNAV_RECORD_PREDICTIONS", str(self.record_predictions)).lower() == "true"

        self.validator = TraceValidator(strict=self.strict_validation)
        self.config_hash = config_hash(scenario, dtaci, cost)
        self.coverage: List[CoverageTrace] = []
        self.last_coverage: CoverageTrace | None = None

        logger.info(
            f"EpisodeRunner initialized: humans={scenario.human_count}, behavior={scenario.behavior.value}, "
            f"predictor={predictor}, Strict={self.strict_validation}, RecordPredictions={self.record_predictions}"
        )

    def _environment(self, planner: Planner) -> CrowdNavEnvironment:
        if isinstance(planner, LearnedPolicy) and planner.horizon != self.dtaci.horizon:
            raise InputValidationError(
                f"policy '{planner.name}' observes {planner.horizon} prediction steps, DtACI issues {self.dtaci.horizon}"
            )
        max_humans = planner.max_humans if planner.max_humans is not None else self.scenario.human_count
        return CrowdNavEnvironment(
            self.scenario,
            self.dtaci,
            self.cost,
            max_humans=max_humans,
            variant=planner.variant,
            predictor=self.predictor,
            noise_scale=self.noise_scale,
        )

    def run_episode(self, planner: Planner, seed: int) -> EpisodeTrace:
        """Roll one episode to its terminal event and return its annotated trace.

        Args:
            planner: Policy choosing the robot velocity each step
            seed: Episode seed (spawn, goal resampling and conformal query streams)

        Returns:
            EpisodeTrace with danger flags filled in
        """
        environment = self._environment(planner)
        observation = environment.reset(seed)
        planner.reset(seed)
        world = environment.world
        assert world is not None and environment.bank is not None

        header = TraceHeader(
            scenario=self.scenario,
            seed=seed,
            config_hash=self.config_hash,
            policy=planner.name,
            variant=planner.variant.value,
            robot_start=world.robot.position.copy(),
            robot_goal=world.robot.goal.copy(),
            human_radii=world.human_radii,
            initial_human_positions=world.human_positions,
            initial_human_velocities=world.human_velocities,
            horizon=self.dtaci.horizon,
            danger_window=self.cost.danger_window,
        )
        trace = EpisodeTrace(header=header)

        while True:
            context = PlanningContext(environment.world, environment.predictions, environment.uncertainty, observation)
            action = np.asarray(planner.act(context), dtype=float)
            result = environment.step(action)
            world = environment.world
            trace.steps.append(
                StepRecord(
                    step=world.step_index,
                    time=world.clock,
                    robot_position=world.robot.position.copy(),
                    robot_velocity=world.robot.velocity.copy(),
                    action=action,
                    human_positions=world.human_positions,
                    human_velocities=world.human_velocities,
                    event=result.event,
                    reward=result.reward,
                    cost=result.cost,
                    intrusion=result.intrusion,
                    human_contacts=result.transition.human_contacts if result.transition else 0,
                    predictions=environment.predictions.points.copy() if self.record_predictions else None,
                    uncertainty=environment.uncertainty.copy() if self.record_predictions else None,
                )
            )
            observation = result.observation
            if result.done:
                break

        annotate_danger(trace)
        self.last_coverage = environment.bank.coverage
        if self.last_coverage is not None:
            self.coverage.append(self.last_coverage)
        self._log_episode_metrics(trace)
        return trace

    def run_many(self, planner: Planner, seeds: List[int]) -> List[EpisodeTrace]:
        """Run one episode per seed; failed episodes are logged and skipped unless strict.

        Args:
            planner: Policy to evaluate
            seeds: Episode seeds, run in order

        Returns:
            Traces of the episodes that completed
        """
        traces: List[EpisodeTrace] = []
        for seed in seeds:
            try:
                traces.append(self.run_episode(planner, seed))
            except CrowdNavError as e:
                logger.error(f"Episode {seed} with policy {planner.name} failed: {e}", exc_info=True)
                if self.strict_validation:
                    raise
        logger.info(f"Completed {len(traces)}/{len(seeds)} episodes with policy {planner.name}")
        return traces

    def _log_episode_metrics(self, trace: EpisodeTrace) -> None:
        """Log per-episode metrics for observability.

        Args:
            trace: Finished episode trace
        """
        contacts = sum(step.human_contacts for step in trace.steps)
        logger.debug(
            f"Episode metrics: seed={trace.header.seed}, event={trace.outcome.value}, steps={len(trace)}, "
            f"cost={trace.total_cost:.3f}, reward={trace.total_reward:.3f}, danger={trace.danger_steps}, "
            f"contacts={contacts}"
        )
        log.debug(
            "episode_complete",
            policy=trace.header.policy,
            seed=trace.header.seed,
            outcome=trace.outcome.value,
            steps=len(trace),
            episode_cost=trace.total_cost,
        )


def replay_coverage(trace: EpisodeTrace, dtaci: DtaciConfig = DtaciConfig(), seed: int = 0) -> CoverageTrace:
    """Re-run a fresh DtACI bank over a recorded episode with constant-velocity predictions.

    Predictions are rebuilt from the recorded positions and velocities, so any trace can be
    calibrated under a different alpha or learning-rate set than it was recorded with.
    """
    header = trace.header
    bank = DtaciBank.create(dtaci, header.human_count)
    rng = np.random.default_rng(seed)
    horizon = dtaci.horizon

    def issue(positions: np.ndarray, velocities: np.ndarray, step: int) -> None:
        points = constant_velocity_points(positions, velocities, header.dt, horizon)
        bank.issue(PredictionSet(points=points, issued_at=step), rng)

    issue(header.initial_human_positions, header.initial_human_velocities, 0)
    for record in trace.steps:
        bank.observe(record.human_positions, record.step)
        issue(record.human_positions, record.human_velocities, record.step)
    assert bank.coverage is not None
    return bank.coverage
