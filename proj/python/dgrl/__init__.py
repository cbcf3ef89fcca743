"""Discrete factorial goal representations: quantizer, mazes, bound checks and experiment runner."""

from ._core import (
    Codebook,
    ConfigError,
    ExperimentConfig,
    GoalMazeEnv,
    QuantizedLatent,
    TrainingFault,
    UsageError,
    VqConfig,
    build_maze,
    check_bound,
    concentration_term,
    downsample,
    factor_match_fraction,
    goal_split,
    load_config,
    nearest_code,
    parse_config,
    quantize,
    run_experiment,
    shortest_path_length,
    value_models,
)

__all__ = [
    "Codebook",
    "ConfigError",
    "ExperimentConfig",
    "GoalMazeEnv",
    "QuantizedLatent",
    "TrainingFault",
    "UsageError",
    "VqConfig",
    "build_maze",
    "check_bound",
    "concentration_term",
    "downsample",
    "factor_match_fraction",
    "goal_split",
    "load_config",
    "nearest_code",
    "parse_config",
    "quantize",
    "run_experiment",
    "shortest_path_length",
    "value_models",
]
