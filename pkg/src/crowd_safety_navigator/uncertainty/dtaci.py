"""Dynamically-tuned adaptive conformal inference over per-(human, horizon) prediction errors.

Every (h, k) cell runs M quantile trackers with learning rates gamma_m. Each tracker moves its
radius up after a miss and down after a cover; exponential weights over the trackers' pinball
losses decide which radius is read out.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from crowd_safety_navigator.config import DtaciConfig, QueryMode
from crowd_safety_navigator.errors import ErrorNotMeasurable, InputValidationError
from crowd_safety_navigator.simulation.state import WorldState
from crowd_safety_navigator.uncertainty.prediction import PredictionSet

logger = logging.getLogger(__name__)


def pinball_loss(delta: np.ndarray | float, estimate: np.ndarray | float, alpha: float) -> np.ndarray | float:
    """alpha * (d - e) above the estimate, (alpha - 1) * (d - e) below; never negative."""
    residual = np.asarray(delta, dtype=float) - np.asarray(estimate, dtype=float)
    loss = np.where(residual >= 0, alpha * residual, (alpha - 1.0) * residual)
    return float(loss) if loss.ndim == 0 else loss


def realized_error(current: WorldState, issued: PredictionSet | None, h: int, k: int) -> float:
    """Distance between human h's position now and the point predicted for now k steps ago.

    Raises:
        ErrorNotMeasurable: If no prediction was issued exactly k steps ago
    """
    if issued is None or issued.issued_at != current.step_index - k or k > issued.horizon:
        raise ErrorNotMeasurable(f"No lag-{k} prediction available at step {current.step_index}")
    return float(np.linalg.norm(current.humans[h].position - issued.points[h, k - 1]))


@dataclass
class CoverageTrace:
    """Per-horizon (realized error, radius used) pairs, plus the signed estimate-minus-actual series."""

    horizon: int
    deltas: dict[int, list[float]] = field(default_factory=dict)
    radii: dict[int, list[float]] = field(default_factory=dict)
    # (step, human, k, radius - delta)
    aci_errors: list[tuple[int, int, int, float]] = field(default_factory=list)

    def record(self, step: int, k: int, deltas: np.ndarray, radii: np.ndarray) -> None:
        self.deltas.setdefault(k, []).extend(float(d) for d in deltas)
        self.radii.setdefault(k, []).extend(float(r) for r in radii)
        self.aci_errors.extend((step, h, k, float(r - d)) for h, (d, r) in enumerate(zip(deltas, radii)))

    def pairs(self) -> dict[int, list[tuple[float, float]]]:
        return {k: list(zip(self.deltas[k], self.radii[k])) for k in sorted(self.deltas)}


@dataclass
class DtaciBank:
    """Quantile-tracker bank; arrays are shaped (H, K, M)."""

    estimates: np.ndarray
    weights: np.ndarray
    learning_rates: np.ndarray
    alpha: float
    sigma: float
    eta: float
    query_mode: QueryMode = QueryMode.SAMPLED
    history: deque = field(default_factory=deque)
    coverage: CoverageTrace | None = None

    @classmethod
    def create(cls, config: DtaciConfig, human_count: int) -> "DtaciBank":
        """Fresh bank; every tracker of horizon k starts at the configured initial error for k."""
        horizon = config.horizon
        rates = np.asarray(config.learning_rates, dtype=float)
        initial = np.asarray(config.initial_errors, dtype=float)
        estimates = np.broadcast_to(initial[None, :, None], (human_count, horizon, rates.size)).copy()
        return cls(
            estimates=estimates,
            weights=np.full_like(estimates, 1.0 / rates.size),
            learning_rates=rates,
            alpha=config.alpha,
            sigma=config.sigma,
            eta=config.eta,
            query_mode=config.query_mode,
            history=deque(maxlen=horizon),
            coverage=CoverageTrace(horizon=horizon),
        )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.estimates.shape  # type: ignore[return-value]

    @property
    def horizon(self) -> int:
        return int(self.estimates.shape[1])

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum(axis=-1, keepdims=True)

    def issue(self, predictions: PredictionSet, rng: np.random.Generator) -> np.ndarray:
        """Query radii for a freshly issued prediction set and remember both for later scoring."""
        if predictions.human_count != self.shape[0] or predictions.horizon != self.horizon:
            raise InputValidationError(
                f"prediction grid {predictions.points.shape[:2]} does not match bank {self.shape[:2]}"
            )
        radii = dtaci_query(self, rng, self.query_mode)
        self.history.append((predictions, radii))
        return radii

    def observe(self, positions: np.ndarray, step_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Score every stored prediction that targets ``step_index`` and update the bank.

        Returns:
            (errors, measurable) arrays of shape (H, K)
        """
        count, horizon, _ = self.shape
        errors = np.zeros((count, horizon))
        measurable = np.zeros((count, horizon), dtype=bool)
        for predictions, radii in self.history:
            k = step_index - predictions.issued_at
            if 1 <= k <= horizon:
                delta = np.linalg.norm(positions - predictions.points[:, k - 1], axis=-1)
                errors[:, k - 1] = delta
                measurable[:, k - 1] = True
                if self.coverage is not None:
                    self.coverage.record(step_index, k, delta, radii[:, k - 1])
        if measurable.any():
            dtaci_update(self, errors, measurable)
        return errors, measurable

    def observe_world(self, world: WorldState) -> tuple[np.ndarray, np.ndarray]:
        return self.observe(world.human_positions, world.step_index)


def dtaci_update(bank: DtaciBank, errors: np.ndarray, measurable: np.ndarray | None = None) -> DtaciBank:
    """One online step for every measurable (h, k) cell, in place.

    Args:
        bank: Bank to update
        errors: Realized errors, shape (H, K)
        measurable: Cells to update; defaults to all

    Raises:
        InputValidationError: If a measurable error is not finite or shapes disagree
    """
    errors = np.asarray(errors, dtype=float)
    if errors.shape != bank.estimates.shape[:2]:
        raise InputValidationError(f"errors shape {errors.shape} does not match bank {bank.estimates.shape[:2]}")
    mask = np.ones(errors.shape, dtype=bool) if measurable is None else np.asarray(measurable, dtype=bool)
    if not np.all(np.isfinite(errors[mask])):
        raise InputValidationError("realized errors must be finite")

    delta = np.where(mask, errors, 0.0)[..., None]
    previous = bank.estimates
    miss = (previous < delta).astype(float)
    updated = np.maximum(previous - bank.learning_rates * (bank.alpha - miss), 0.0)

    # Losses of the radii that were live for this period.
    losses = pinball_loss(delta, previous, bank.alpha)
    losses = losses - losses.min(axis=-1, keepdims=True)
    scaled = bank.weights * np.exp(-bank.eta * losses)
    total = scaled.sum(axis=-1, keepdims=True)
    members = bank.estimates.shape[-1]
    normalized = np.where(total > 0, scaled / np.where(total > 0, total, 1.0), 1.0 / members)
    new_weights = (1.0 - bank.sigma) * normalized + bank.sigma / members

    cell = mask[..., None]
    bank.estimates = np.where(cell, updated, previous)
    bank.weights = np.where(cell, new_weights, bank.weights)
    return bank


def dtaci_query(bank: DtaciBank, rng: np.random.Generator, mode: QueryMode = QueryMode.SAMPLED) -> np.ndarray:
    """Read an (H, K) radius grid out of the bank."""
    probabilities = bank.probabilities
    if QueryMode(mode) is QueryMode.EXPECTED:
        radii = (probabilities * bank.estimates).sum(axis=-1)
    else:
        cumulative = np.cumsum(probabilities, axis=-1)
        draws = rng.random(probabilities.shape[:-1])
        index = np.minimum((cumulative < draws[..., None]).sum(axis=-1), probabilities.shape[-1] - 1)
        radii = np.take_along_axis(bank.estimates, index[..., None], axis=-1)[..., 0]
    return np.maximum(radii, 0.0)


def coverage_report(error_trace: dict[int, list[tuple[float, float]]] | CoverageTrace) -> dict[int, float]:
    """Fraction of steps with delta <= radius, per horizon.

    Raises:
        InputValidationError: If the trace, or any horizon in it, is empty
    """
    pairs = error_trace.pairs() if isinstance(error_trace, CoverageTrace) else error_trace
    if not pairs:
        raise InputValidationError("coverage trace is empty")
    report: dict[int, float] = {}
    for k in sorted(pairs):
        samples = pairs[k]
        if len(samples) == 0:
            raise InputValidationError(f"coverage trace for horizon {k} is empty")
        values = np.asarray(samples, dtype=float)
        report[k] = float(np.mean(values[:, 0] <= values[:, 1]))
    return report


def merge_coverage(traces: list[CoverageTrace]) -> dict[int, list[tuple[float, float]]]:
    """Pool several episodes' coverage traces."""
    merged: dict[int, list[tuple[float, float]]] = {}
    for trace in traces:
        for k, samples in trace.pairs().items():
            merged.setdefault(k, []).extend(samples)
    return merged
