"""Versioned JSON checkpoints for policy parameters."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from crowd_safety_navigator.config import PolicyConfig, TrainingVariant
from crowd_safety_navigator.errors import CheckpointError
from crowd_safety_navigator.learning.network import PolicyParams, init_policy_params

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: PolicyParams
    variant: TrainingVariant
    config_hash: str
    max_humans: int
    metadata: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    path: Path | str,
    params: PolicyParams,
    variant: TrainingVariant,
    config_hash: str,
    max_humans: int,
    metadata: dict[str, Any] | None = None,
) -> Path:
    """Write parameters and everything needed to rebuild observations for them."""
    path = Path(path)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config_hash": config_hash,
        "variant": TrainingVariant(variant).value,
        "max_humans": max_humans,
        "policy_config": params.config.model_dump(mode="json"),
        "metadata": metadata or {},
        "params": {key: value.tolist() for key, value in sorted(params.arrays.items())},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
    logger.info(f"Checkpoint saved to {path}")
    return path


def load_checkpoint(path: Path | str) -> Checkpoint:
    """Read and shape-check a checkpoint.

    Raises:
        CheckpointError: If the file is missing, unreadable, from another format version, or its
            arrays do not match the stored policy config
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Unreadable checkpoint {path}: {e}") from e

    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"Checkpoint {path} has format_version {version}, expected {CHECKPOINT_FORMAT_VERSION}")
    try:
        config = PolicyConfig.model_validate(payload["policy_config"])
        variant = TrainingVariant(payload["variant"])
        stored = payload["params"]
    except (KeyError, ValueError, ValidationError) as e:
        raise CheckpointError(f"Malformed checkpoint {path}: {e}") from e

    # Shapes come from a freshly initialised network of the same config.
    params = init_policy_params(config, np.random.default_rng(0))
    missing = set(params.arrays) ^ set(stored)
    if missing:
        raise CheckpointError(f"Checkpoint {path} parameter keys mismatch: {sorted(missing)}")
    for key, template in params.arrays.items():
        value = np.asarray(stored[key], dtype=float)
        if value.shape != template.shape:
            raise CheckpointError(f"Checkpoint {path}: '{key}' has shape {value.shape}, expected {template.shape}")
        params.arrays[key] = value

    return Checkpoint(
        params=params,
        variant=variant,
        config_hash=str(payload.get("config_hash", "")),
        max_humans=int(payload.get("max_humans", 0)),
        metadata=payload.get("metadata", {}),
    )
