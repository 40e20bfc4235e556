"""Experiment control plane: configuration, the federated round loop, and
report emission."""

from .config import (
    AdversarySpec,
    ExperimentConfig,
    IdxSource,
    SyntheticSource,
    load_config,
)
from .rounds import (
    ROUNDS_CSV_HEADER,
    WALL_TIME_COLUMNS,
    ExperimentReport,
    ExperimentState,
    RoundLog,
    RunSetup,
    build_setup,
    initial_state,
    run_experiment,
    run_round,
)

__all__ = [
    "AdversarySpec",
    "ExperimentConfig",
    "IdxSource",
    "SyntheticSource",
    "load_config",
    "ExperimentReport",
    "ExperimentState",
    "RoundLog",
    "RunSetup",
    "build_setup",
    "initial_state",
    "run_experiment",
    "run_round",
    "ROUNDS_CSV_HEADER",
    "WALL_TIME_COLUMNS",
]
