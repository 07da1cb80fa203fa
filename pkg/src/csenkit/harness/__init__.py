"""Dataset ingestion, experiment orchestration, reporting and the CLI."""
from .config import ExperimentConfig, ExperimentKind, ExperimentRecord
from .experiments import (
    Dataset,
    ExperimentOutput,
    PhaseCell,
    load_dataset,
    phase_border,
    run_dictclass_bench,
    run_experiment,
    run_noise_sweep,
    run_phase_transition,
    run_recovery_comparison,
    run_se_experiment,
)
from .idx import IdxFormatError, load_idx
from .report import emit_report, read_results

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "ExperimentKind",
    "ExperimentOutput",
    "ExperimentRecord",
    "IdxFormatError",
    "PhaseCell",
    "emit_report",
    "load_dataset",
    "load_idx",
    "phase_border",
    "read_results",
    "run_dictclass_bench",
    "run_experiment",
    "run_noise_sweep",
    "run_phase_transition",
    "run_recovery_comparison",
    "run_se_experiment",
]
