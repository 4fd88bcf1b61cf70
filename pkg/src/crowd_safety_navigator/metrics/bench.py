"""Navigation metrics over episode traces and multi-seed evaluation campaigns."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import structlog

from crowd_safety_navigator.config import CampaignConfig, DtaciConfig, MpcConfig, SafetyCostConfig, ScenarioConfig
from crowd_safety_navigator.errors import InputValidationError
from crowd_safety_navigator.metrics.trace import EpisodeTrace
from crowd_safety_navigator.navigation_orchestrator import EpisodeRunner
from crowd_safety_navigator.planners.policies import Planner, resolve_policy
from crowd_safety_navigator.simulation.state import Event

logger = logging.getLogger(__name__)
log = structlog.get_logger(__name__)

METRIC_NAMES = ("SR", "CR", "TR", "NT", "PL", "ITR", "SD")


@dataclass
class MetricsTable:
    """Success / collision / timeout rates, navigation time, path length, intrusion ratio, social distance.

    ``std`` holds the spread of each metric across the aggregated groups (training or test seeds);
    NT and SD are None when no episode defines them.
    """

    episodes: int
    successes: int
    collisions: int
    timeouts: int
    SR: float
    CR: float
    TR: float
    NT: float | None
    PL: float
    ITR: float
    SD: float | None
    std: dict[str, float | None] = field(default_factory=dict)
    groups: int = 1

    def value(self, name: str) -> float | None:
        return getattr(self, name)

    def outcome_fractions(self) -> tuple[Fraction, Fraction, Fraction]:
        """Exact (success, collision, timeout) shares of all episodes; they sum to 1."""
        return (
            Fraction(self.successes, self.episodes),
            Fraction(self.collisions, self.episodes),
            Fraction(self.timeouts, self.episodes),
        )


def _mean_or_none(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def compute_metrics(traces: list[EpisodeTrace]) -> MetricsTable:
    """Seven navigation metrics over a set of finished episodes.

    Raises:
        InputValidationError: If no traces are given or one has no terminal event
    """
    if not traces:
        raise InputValidationError("compute_metrics needs at least one trace")
    outcomes = [trace.outcome for trace in traces]
    if Event.RUNNING in outcomes:
        raise InputValidationError("every trace must end in a terminal event")

    total = len(traces)
    successes = outcomes.count(Event.REACHED_GOAL)
    collisions = outcomes.count(Event.COLLISION)
    timeouts = outcomes.count(Event.TIMEOUT)

    success_times = [trace.duration for trace in traces if trace.outcome is Event.REACHED_GOAL]
    danger_ratios = [trace.danger_steps / len(trace) for trace in traces]
    danger_distances = [
        step.danger_distance for trace in traces for step in trace.steps if step.danger and step.danger_distance is not None
    ]
    return MetricsTable(
        episodes=total,
        successes=successes,
        collisions=collisions,
        timeouts=timeouts,
        SR=float(Fraction(successes, total)),
        CR=float(Fraction(collisions, total)),
        TR=float(Fraction(timeouts, total)),
        NT=_mean_or_none(success_times),
        PL=float(np.mean([trace.path_length for trace in traces])),
        ITR=float(np.mean(danger_ratios)),
        SD=_mean_or_none(danger_distances),
        std={name: 0.0 for name in METRIC_NAMES},
    )


def aggregate_tables(tables: list[MetricsTable]) -> MetricsTable:
    """Mean and population std of each metric across groups; counts are summed."""
    if not tables:
        raise InputValidationError("aggregate_tables needs at least one table")
    means: dict[str, float | None] = {}
    spreads: dict[str, float | None] = {}
    for name in METRIC_NAMES:
        values = [table.value(name) for table in tables if table.value(name) is not None]
        means[name] = float(np.mean(values)) if values else None
        spreads[name] = float(np.std(values)) if values else None
    return MetricsTable(
        episodes=sum(table.episodes for table in tables),
        successes=sum(table.successes for table in tables),
        collisions=sum(table.collisions for table in tables),
        timeouts=sum(table.timeouts for table in tables),
        SR=means["SR"] or 0.0,
        CR=means["CR"] or 0.0,
        TR=means["TR"] or 0.0,
        NT=means["NT"],
        PL=means["PL"] or 0.0,
        ITR=means["ITR"] or 0.0,
        SD=means["SD"],
        std=spreads,
        groups=len(tables),
    )


def episode_seed(test_seed: int, episode: int) -> int:
    """Episode seeds derived from (test seed, index); independent of worker scheduling."""
    return int(np.random.SeedSequence([test_seed, episode]).generate_state(1)[0])


@dataclass(frozen=True)
class CampaignJob:
    variant: str
    policy: str
    test_seed: int
    episode: int
    scenario: ScenarioConfig
    dtaci: DtaciConfig
    cost: SafetyCostConfig
    mpc: MpcConfig


@lru_cache(maxsize=16)
def _planner(spec: str, mpc: MpcConfig) -> Planner:
    # One planner per worker process; MPC reseeds itself at every episode reset.
    return resolve_policy(spec, mpc=mpc)


@lru_cache(maxsize=16)
def _runner(scenario: ScenarioConfig, dtaci: DtaciConfig, cost: SafetyCostConfig) -> EpisodeRunner:
    return EpisodeRunner(scenario, dtaci, cost, env={"CROWDNAV_RECORD_PREDICTIONS": "false"})


def run_campaign_job(job: CampaignJob) -> EpisodeTrace:
    """Top-level so that process pools can pickle it."""
    runner = _runner(job.scenario, job.dtaci, job.cost)
    trace = runner.run_episode(_planner(job.policy, job.mpc), episode_seed(job.test_seed, job.episode))
    runner.coverage.clear()
    return trace


def run_campaign(
    policies: list[str],
    variants: dict[str, ScenarioConfig],
    campaign: CampaignConfig = CampaignConfig(),
    dtaci: DtaciConfig = DtaciConfig(),
    cost: SafetyCostConfig = SafetyCostConfig(),
    mpc: MpcConfig = MpcConfig(),
) -> dict[str, MetricsTable]:
    """Evaluate every policy on every scenario variant over the campaign's test seeds.

    With several policies (one checkpoint per training seed) the spread is taken across them;
    with one policy it is taken across test seeds.

    Args:
        policies: Policy specs ("mpc", "orca", "sf" or "checkpoint:<path>")
        variants: Scenario per variant name, e.g. {"in_distribution": ..., "rushing": ...}
        campaign: Episodes per seed, test seeds and worker count
        dtaci: Conformal bank settings
        cost: Safety cost and danger-window settings
        mpc: MPC planner settings

    Returns:
        MetricsTable per variant name, in the order given

    Raises:
        CheckpointError: If a checkpoint policy cannot be loaded
    """
    if not policies:
        raise InputValidationError("run_campaign needs at least one policy")
    for spec in policies:
        _planner(spec, mpc)

    jobs = [
        CampaignJob(name, spec, test_seed, episode, scenario, dtaci, cost, mpc)
        for name, scenario in variants.items()
        for spec in policies
        for test_seed in campaign.test_seeds
        for episode in range(campaign.episodes)
    ]
    logger.info(
        f"Campaign: {len(variants)} variants x {len(policies)} policies x {len(campaign.test_seeds)} seeds "
        f"x {campaign.episodes} episodes on {campaign.workers} workers"
    )

    if campaign.workers > 1:
        with ProcessPoolExecutor(max_workers=campaign.workers) as pool:
            traces = list(pool.map(run_campaign_job, jobs, chunksize=max(1, campaign.episodes // 4)))
    else:
        traces = [run_campaign_job(job) for job in jobs]

    results: dict[str, MetricsTable] = {}
    for name in variants:
        grouped: dict[tuple[str, int], list[EpisodeTrace]] = {}
        for job, trace in zip(jobs, traces):
            if job.variant != name:
                continue
            key = (job.policy, 0) if len(policies) > 1 else (job.policy, job.test_seed)
            grouped.setdefault(key, []).append(trace)
        table = aggregate_tables([compute_metrics(group) for group in grouped.values()])
        results[name] = table
        log.info(
            "campaign_variant_complete",
            variant=name,
            episodes=table.episodes,
            SR=table.SR,
            CR=table.CR,
            ITR=table.ITR,
        )
    return results
