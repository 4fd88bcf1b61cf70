"""CLI entry point for crowd navigation runs."""

import logging
import sys
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional

import structlog
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import Progress
from rich.table import Table

from crowd_safety_navigator import __version__
from crowd_safety_navigator.config import (
    CampaignConfig,
    DtaciConfig,
    MpcConfig,
    OodVariant,
    PolicyConfig,
    RunManifest,
    SafetyCostConfig,
    ScenarioConfig,
    TrainerConfig,
    TrainingVariant,
    config_hash,
    load_scenario,
)
from crowd_safety_navigator.errors import CrowdNavError, InputValidationError
from crowd_safety_navigator.formatters.output_formatter import OutputFormatter
from crowd_safety_navigator.formatters.svg_renderer import render_trace
from crowd_safety_navigator.learning.ppo_lagrangian import CurveRow, train as train_policy
from crowd_safety_navigator.metrics.bench import MetricsTable, episode_seed, run_campaign
from crowd_safety_navigator.metrics.trace import read_trace, write_trace
from crowd_safety_navigator.navigation_orchestrator import EpisodeRunner, replay_coverage
from crowd_safety_navigator.planners.policies import CHECKPOINT_PREFIX, resolve_policy
from crowd_safety_navigator.simulation.scenario import make_ood_variant
from crowd_safety_navigator.uncertainty.dtaci import coverage_report, merge_coverage

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(message)s",
    datefmt="[%X]",
    handlers=[RichHandler(rich_tracebacks=True)],
)


def configure_structlog() -> None:
    """Route structlog key/value events through stdlib logging (and so through RichHandler)."""
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_log_level,
            structlog.processors.KeyValueRenderer(key_order=["event"], sort_keys=True),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


configure_structlog()

logger = logging.getLogger(__name__)
console = Console()
app = typer.Typer(help="Crowd Safety Navigator - uncertainty-aware crowd navigation toolkit")

BUILTIN_POLICIES = ("mpc", "orca", "sf")


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"
    PDF = "pdf"


class Preset(str, Enum):
    DESK = "desk"
    FULL = "full"


class PredictorName(str, Enum):
    CV = "cv"
    NOISY_ORACLE = "noisy_oracle"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _set_verbose(verbose: bool) -> None:
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def _resolve_scenario(
    scenario_path: Optional[Path],
    ood: Optional[OodVariant],
    robot_visible: Optional[bool],
    default: ScenarioConfig,
) -> ScenarioConfig:
    """Scenario file (or default), then OOD variant, then visibility override."""
    if scenario_path is None:
        scenario = default
    else:
        try:
            scenario = load_scenario(scenario_path)
        except InputValidationError as e:
            raise typer.BadParameter(str(e), param_hint="--scenario") from e
    if ood is not None:
        scenario = make_ood_variant(scenario, ood)
    if robot_visible is not None:
        scenario = scenario.model_copy(update={"robot_visible": robot_visible})
    return scenario


def _check_policy(spec: str) -> str:
    if spec in BUILTIN_POLICIES or (spec.startswith(CHECKPOINT_PREFIX) and len(spec) > len(CHECKPOINT_PREFIX)):
        return spec
    raise typer.BadParameter(
        f"Unknown policy '{spec}'. Must be one of: {', '.join(BUILTIN_POLICIES)}, checkpoint:<path>",
        param_hint="--policy",
    )


def _policy_specs(policies: Optional[List[str]], checkpoints: Optional[List[Path]]) -> List[str]:
    """--policy values in order, then one checkpoint:<path> spec per --checkpoint."""
    specs = [_check_policy(spec) for spec in policies or []]
    specs.extend(f"{CHECKPOINT_PREFIX}{path}" for path in checkpoints or [])
    return specs


def _write_manifest(
    command: str, config: dict[str, Any], digest: str, seeds: List[int], outputs: List[Path], out_dir: Path, started: str
) -> Path:
    manifest = RunManifest(
        command=command,
        config=config,
        seeds=seeds,
        code_version=__version__,
        outputs=[str(path) for path in outputs],
        started_at=started,
        finished_at=_now(),
        config_hash=digest,
    )
    return OutputFormatter.write_manifest(manifest, out_dir)


def _print_metrics(tables: dict[str, MetricsTable]) -> None:
    table = Table(title="Navigation metrics")
    for column in ("Variant", "SR", "CR", "TR", "NT", "PL", "ITR", "SD"):
        table.add_column(column)
    for variant, metrics in tables.items():
        table.add_row(
            variant,
            f"{metrics.SR:.3f}",
            f"{metrics.CR:.3f}",
            f"{metrics.TR:.3f}",
            "n/a" if metrics.NT is None else f"{metrics.NT:.2f}",
            f"{metrics.PL:.2f}",
            f"{metrics.ITR:.3f}",
            "n/a" if metrics.SD is None else f"{metrics.SD:.3f}",
        )
    console.print(table)


@app.command()
def simulate(
    scenario_path: Optional[Path] = typer.Option(
        None, "--scenario", "-s", exists=True, dir_okay=False, help="Scenario JSON (default: built-in 20-human scenario)"
    ),
    ood: Optional[OodVariant] = typer.Option(None, "--ood", help="Out-of-distribution variant"),
    policy: Optional[str] = typer.Option(None, "--policy", "-p", help="mpc, orca, sf or checkpoint:<path> (default: orca)"),
    checkpoint: Optional[Path] = typer.Option(
        None, "--checkpoint", "-c", exists=True, dir_okay=False, help="Trained policy checkpoint (instead of --policy)"
    ),
    episodes: int = typer.Option(1, "--episodes", "-n", min=1, help="Number of episodes"),
    seed: int = typer.Option(0, "--seed", envvar="CROWDNAV_SEED", help="Root seed"),
    predictor: PredictorName = typer.Option(PredictorName.CV, "--predictor", help="Trajectory predictor"),
    robot_visible: Optional[bool] = typer.Option(
        None, "--robot-visible/--robot-invisible", help="Override whether humans react to the robot"
    ),
    out: Path = typer.Option(Path("runs/simulate"), "--out", "-o", envvar="CROWDNAV_OUTPUT_DIR", help="Output directory"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """Roll a policy through a scenario and write one JSONL trace per episode.

    Example:
        $ crowdnav simulate --policy mpc --episodes 3 --out runs/mpc
    """
    _set_verbose(verbose)
    started = _now()
    scenario = _resolve_scenario(scenario_path, ood, robot_visible, ScenarioConfig())
    if policy is not None and checkpoint is not None:
        raise typer.BadParameter("Give either --policy or --checkpoint, not both", param_hint="--checkpoint")
    specs = _policy_specs([policy] if policy is not None else None, [checkpoint] if checkpoint is not None else None)
    policy = specs[0] if specs else "orca"
    dtaci, cost, mpc = DtaciConfig(), SafetyCostConfig(), MpcConfig()

    try:
        planner = resolve_policy(policy, mpc=mpc)
        runner = EpisodeRunner(scenario, dtaci, cost, predictor=predictor.value)
        seeds = [episode_seed(seed, index) for index in range(episodes)]
        paths = []
        for index, episode in enumerate(seeds):
            trace = runner.run_episode(planner, episode)
            path = write_trace(trace, out / f"episode_{index:03d}.jsonl", runner.validator)
            paths.append(path)
            console.print(
                f"Episode {index}: [bold]{trace.outcome.value}[/bold] after {len(trace)} steps, "
                f"cost {trace.total_cost:.3f} -> {path}"
            )
        _write_manifest(
            "simulate",
            {
                "scenario": scenario.model_dump(mode="json"),
                "policy": policy,
                "predictor": predictor.value,
                "noise_scale": runner.noise_scale,
                "dtaci": dtaci.model_dump(mode="json"),
                "cost": cost.model_dump(mode="json"),
                "mpc": mpc.model_dump(mode="json"),
            },
            config_hash(scenario, dtaci, cost, mpc),
            seeds,
            paths,
            out,
            started,
        )
        console.print(f"[green]✓ {len(paths)} traces written to {out}[/green]")

    except KeyboardInterrupt:
        console.print("\n[yellow]Simulation interrupted by user[/yellow]")
        sys.exit(130)
    except CrowdNavError as e:
        console.print(f"[red]Error: {e}[/red]")
        logger.exception("Simulation failed")
        sys.exit(1)


@app.command()
def train(
    scenario_path: Optional[Path] = typer.Option(
        None, "--scenario", "-s", exists=True, dir_okay=False, help="Scenario JSON (default: preset scenario)"
    ),
    ood: Optional[OodVariant] = typer.Option(None, "--ood", help="Train on an out-of-distribution variant"),
    cost_limit: float = typer.Option(0.4, "--cost-limit", min=0.0, help="Mean episodic cost target"),
    steps: Optional[int] = typer.Option(None, "--steps", min=1, help="Total environment steps (default: preset)"),
    envs: Optional[int] = typer.Option(None, "--envs", min=1, help="Parallel environments (default: preset)"),
    seed: int = typer.Option(0, "--seed", envvar="CROWDNAV_SEED", help="Training seed"),
    variant: TrainingVariant = typer.Option(TrainingVariant.OURS, "--variant", help="Training variant"),
    preset: Preset = typer.Option(Preset.DESK, "--preset", help="desk (5 humans, 8x8 m) or full scale (20 humans, 12x12 m)"),
    robot_visible: Optional[bool] = typer.Option(
        None, "--robot-visible/--robot-invisible", help="Override whether humans react to the robot"
    ),
    out: Path = typer.Option(Path("runs/train"), "--out", "-o", envvar="CROWDNAV_OUTPUT_DIR", help="Output directory"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """Train a policy with PPO-Lagrangian and write checkpoint, curves CSV and manifest.

    Example:
        $ crowdnav train --cost-limit 0.4 --seed 1 --out runs/limit_0.4_seed_1
    """
    _set_verbose(verbose)
    started = _now()
    default = ScenarioConfig.desk() if preset is Preset.DESK else ScenarioConfig()
    scenario = _resolve_scenario(scenario_path, ood, robot_visible, default)

    overrides: dict[str, Any] = {"cost_limit": cost_limit, "variant": variant}
    if steps is not None:
        overrides["total_steps"] = steps
    if envs is not None:
        overrides["num_envs"] = envs
    trainer = (
        TrainerConfig.desk_preset(**overrides) if preset is Preset.DESK else TrainerConfig.full_preset(**overrides)
    )
    policy, dtaci, cost = PolicyConfig(), DtaciConfig(), SafetyCostConfig()

    try:
        console.print(
            f"[blue]Training {variant.value} for {trainer.iterations} iterations "
            f"({trainer.num_envs} envs, cost limit {cost_limit})[/blue]"
        )
        with Progress(console=console) as progress:
            task = progress.add_task("Training", total=trainer.iterations)

            def advance(row: CurveRow) -> None:
                progress.update(
                    task, advance=1, description=f"cost {row.mean_cost:.3f} lambda {row.lagrange_multiplier:.3f}"
                )

            result = train_policy(
                scenario, trainer, policy, dtaci, cost, seed=seed, out_dir=out, on_iteration=advance
            )

        outputs = [path for path in (result.checkpoint_path, result.curves_path) if path is not None]
        _write_manifest(
            "train",
            {
                "scenario": scenario.model_dump(mode="json"),
                "trainer": trainer.model_dump(mode="json"),
                "policy": policy.model_dump(mode="json"),
                "dtaci": dtaci.model_dump(mode="json"),
                "cost": cost.model_dump(mode="json"),
            },
            config_hash(scenario, trainer, policy, dtaci, cost),
            [seed],
            outputs,
            out,
            started,
        )
        console.print(f"[green]✓ Checkpoint saved to {result.checkpoint_path}[/green]")
        console.print(f"  Final lambda: {result.lagrange_multiplier:.4f}")

    except KeyboardInterrupt:
        console.print("\n[yellow]Training interrupted by user[/yellow]")
        sys.exit(130)
    except CrowdNavError as e:
        console.print(f"[red]Error: {e}[/red]")
        if getattr(e, "dump_path", None):
            console.print(f"[red]Diagnostic dump: {e.dump_path}[/red]")
        logger.exception("Training failed")
        sys.exit(1)


@app.command()
def evaluate(
    policies: Optional[List[str]] = typer.Option(
        None, "--policy", "-p", help="mpc, orca, sf or checkpoint:<path>; repeat once per training seed"
    ),
    checkpoints: Optional[List[Path]] = typer.Option(
        None, "--checkpoint", "-c", exists=True, dir_okay=False, help="Trained policy checkpoint; repeatable"
    ),
    scenario_path: Optional[Path] = typer.Option(
        None, "--scenario", "-s", exists=True, dir_okay=False, help="Scenario JSON (default: built-in scenario)"
    ),
    ood: Optional[List[OodVariant]] = typer.Option(None, "--ood", help="Also evaluate these OOD variants"),
    episodes: int = typer.Option(50, "--episodes", "-n", min=1, help="Episodes per test seed"),
    seeds: int = typer.Option(5, "--seeds", min=1, help="Number of test seeds"),
    seed: int = typer.Option(0, "--seed", envvar="CROWDNAV_SEED", help="First test seed"),
    workers: int = typer.Option(1, "--workers", "-w", min=1, envvar="CROWDNAV_WORKERS", help="Worker processes"),
    format: OutputFormat = typer.Option(OutputFormat.CSV, "--format", "-f", help="Output format: csv, json, pdf"),
    robot_visible: Optional[bool] = typer.Option(
        None, "--robot-visible/--robot-invisible", help="Override whether humans react to the robot"
    ),
    out: Path = typer.Option(Path("runs/evaluate"), "--out", "-o", envvar="CROWDNAV_OUTPUT_DIR", help="Output directory"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """Run an evaluation campaign and write the metrics table.

    Example:
        $ crowdnav evaluate --policy orca --episodes 50 --seeds 5
        $ crowdnav evaluate --policy checkpoint:runs/s0/checkpoint.json --policy checkpoint:runs/s1/checkpoint.json --ood rushing
    """
    _set_verbose(verbose)
    started = _now()
    base = _resolve_scenario(scenario_path, None, robot_visible, ScenarioConfig())
    policies = _policy_specs(policies, checkpoints)
    if not policies:
        raise typer.BadParameter("Give at least one --policy or --checkpoint", param_hint="--policy")
    variants = {"in_distribution": base}
    for variant in ood or []:
        variants[variant.value] = make_ood_variant(base, variant)
    campaign = CampaignConfig(episodes=episodes, seeds=seeds, base_seed=seed, workers=workers)
    dtaci, cost, mpc = DtaciConfig(), SafetyCostConfig(), MpcConfig()

    try:
        console.print(
            f"[blue]Evaluating {len(policies)} policies on {len(variants)} variants "
            f"({campaign.seeds} seeds x {campaign.episodes} episodes)[/blue]"
        )
        tables = run_campaign(policies, variants, campaign, dtaci, cost, mpc)
        _print_metrics(tables)

        output = out / f"metrics.{format.value}"
        console.print(f"[blue]Saving {format.value.upper()} output to: {output}[/blue]")
        OutputFormatter.save_to_file(tables, format.value, output)
        _write_manifest(
            "evaluate",
            {
                "variants": {name: scenario.model_dump(mode="json") for name, scenario in variants.items()},
                "policies": policies,
                "campaign": campaign.model_dump(mode="json"),
                "dtaci": dtaci.model_dump(mode="json"),
                "cost": cost.model_dump(mode="json"),
                "mpc": mpc.model_dump(mode="json"),
            },
            config_hash(campaign, dtaci, cost, mpc, *variants.values()),
            campaign.test_seeds,
            [output],
            out,
            started,
        )
        console.print(f"[green]✓ Output saved to {output}[/green]")

    except KeyboardInterrupt:
        console.print("\n[yellow]Evaluation interrupted by user[/yellow]")
        sys.exit(130)
    except (CrowdNavError, ImportError) as e:
        console.print(f"[red]Error: {e}[/red]")
        logger.exception("Evaluation failed")
        sys.exit(1)


@app.command()
def calibrate(
    traces: List[Path] = typer.Option(..., "--trace", "-t", exists=True, dir_okay=False, help="JSONL trace (repeatable)"),
    alpha: float = typer.Option(0.1, "--alpha", min=0.0, max=1.0, help="Miscoverage level"),
    seed: int = typer.Option(0, "--seed", envvar="CROWDNAV_SEED", help="Query sampling seed"),
    errors_out: bool = typer.Option(False, "--errors-out", help="Also write the per-step ACI error series"),
    out: Path = typer.Option(Path("runs/calibrate"), "--out", "-o", envvar="CROWDNAV_OUTPUT_DIR", help="Output directory"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """Replay traces through a fresh DtACI bank and report per-horizon coverage.

    Example:
        $ crowdnav calibrate --trace runs/simulate/episode_000.jsonl --alpha 0.1
    """
    _set_verbose(verbose)
    started = _now()
    try:
        dtaci = DtaciConfig(alpha=alpha)
    except ValueError as e:
        raise typer.BadParameter(str(e), param_hint="--alpha") from e

    try:
        coverage = [replay_coverage(read_trace(path), dtaci, seed=seed) for path in traces]
        pairs = merge_coverage(coverage)
        report = coverage_report(pairs)
        samples = {k: len(values) for k, values in pairs.items()}

        for k, value in report.items():
            console.print(f"  k={k}: coverage {value:.4f} over {samples[k]} samples")

        out.mkdir(parents=True, exist_ok=True)
        outputs = [out / "coverage.csv"]
        outputs[0].write_text(OutputFormatter.coverage_to_csv(report, samples), encoding="utf-8")
        if errors_out:
            outputs.append(out / "aci_errors.csv")
            outputs[1].write_text(OutputFormatter.aci_errors_to_csv(coverage), encoding="utf-8")
        _write_manifest(
            "calibrate",
            {"dtaci": dtaci.model_dump(mode="json"), "traces": [str(path) for path in traces]},
            config_hash(dtaci),
            [seed],
            outputs,
            out,
            started,
        )
        console.print(f"[green]✓ Coverage saved to {outputs[0]}[/green]")

    except KeyboardInterrupt:
        console.print("\n[yellow]Calibration interrupted by user[/yellow]")
        sys.exit(130)
    except CrowdNavError as e:
        console.print(f"[red]Error: {e}[/red]")
        logger.exception("Calibration failed")
        sys.exit(1)


@app.command()
def render(
    trace_path: Path = typer.Option(..., "--trace", "-t", exists=True, dir_okay=False, help="JSONL trace"),
    out: Path = typer.Option(Path("runs/frames"), "--out", "-o", help="Directory for SVG frames"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose logging"),
):
    """Render a trace to one SVG per step with uncertainty discs.

    Example:
        $ crowdnav render --trace runs/simulate/episode_000.jsonl --out frames/
    """
    _set_verbose(verbose)
    try:
        trace = read_trace(trace_path)
        frames = render_trace(trace, out)
        console.print(f"[green]✓ {len(frames)} frames written to {out}[/green]")
    except KeyboardInterrupt:
        console.print("\n[yellow]Rendering interrupted by user[/yellow]")
        sys.exit(130)
    except CrowdNavError as e:
        console.print(f"[red]Error: {e}[/red]")
        logger.exception("Rendering failed")
        sys.exit(1)


@app.command()
def version():
    """Show version information."""
    console.print(f"Crowd Safety Navigator v{__version__}")


if __name__ == "__main__":
    app()
