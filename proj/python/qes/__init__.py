"""Quantized evolution strategies: integer-lattice ES with error feedback."""

import json as _json

from ._core import (
    ConfigError,
    DimensionError,
    EvaluationError,
    HistoryWindow,
    OptimizerConfig,
    QuantLattice,
    __version__,
    derive_member_seed,
    derive_update_seed,
    estimate_gradient,
    gate_apply,
    normalize_rewards,
    realize_perturbation,
    registered_tasks,
    rematerialize_residual,
    sample_noise,
    step_full_residual,
)
from . import _core


def run(config):
    """Run a config dict in memory; returns rewards, final weights and per-generation reports."""
    return _core.run_json(_json.dumps(config))


def run_to_directory(config):
    """Run a config dict and write outputs to config["out_dir"]; returns (initial, final, generations)."""
    return _core.run_to_directory(_json.dumps(config))


__all__ = [
    "ConfigError",
    "DimensionError",
    "EvaluationError",
    "HistoryWindow",
    "OptimizerConfig",
    "QuantLattice",
    "__version__",
    "derive_member_seed",
    "derive_update_seed",
    "estimate_gradient",
    "gate_apply",
    "normalize_rewards",
    "realize_perturbation",
    "registered_tasks",
    "rematerialize_residual",
    "run",
    "run_to_directory",
    "sample_noise",
    "step_full_residual",
]
