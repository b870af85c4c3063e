"""Experiment orchestration, reports and the command-line interface."""

from .config import ExperimentConfig, SweepGrid, load_config
from .experiments import (
    AvoidanceReport,
    BenchmarkReport,
    ProfileAxis,
    ReportRow,
    ablation_summary,
    avoidance_study,
    count_avoidance,
    ensemble_size_ablation,
    make_context,
    run_benchmark,
    run_sweep,
    sweep_hyperparams,
    uncertainty_profile,
    variant_config,
)
from .report import write_benchmark

__all__ = [
    "AvoidanceReport",
    "BenchmarkReport",
    "ExperimentConfig",
    "ProfileAxis",
    "ReportRow",
    "SweepGrid",
    "ablation_summary",
    "avoidance_study",
    "count_avoidance",
    "ensemble_size_ablation",
    "load_config",
    "make_context",
    "run_benchmark",
    "run_sweep",
    "sweep_hyperparams",
    "uncertainty_profile",
    "variant_config",
    "write_benchmark",
]
