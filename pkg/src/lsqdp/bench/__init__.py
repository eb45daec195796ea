"""Experiment harness: synthetic data, mechanism adapters, experiments, heatmaps."""

from .adapters import MECHANISMS, MechanismOptions, estimate, estimate_raw, make_release, repetition_ladder
from .config import BenchConfig, load_config, run_bench, write_bench
from .datasets import diabetes_like, isotropic, make_dataset, mixture2d, split_queries
from .experiments import run_error_vs_budget, run_error_vs_privacy, run_error_vs_runtime, trial_seed
from .heatmap import HeatmapGrid, emit_heatmap, write_heatmap
from .records import FIELDS, NON_PRIVATE, ExperimentRecord, read_records, write_records

__all__ = [
    "BenchConfig",
    "ExperimentRecord",
    "FIELDS",
    "HeatmapGrid",
    "MECHANISMS",
    "MechanismOptions",
    "NON_PRIVATE",
    "diabetes_like",
    "emit_heatmap",
    "estimate",
    "estimate_raw",
    "isotropic",
    "load_config",
    "make_dataset",
    "make_release",
    "mixture2d",
    "read_records",
    "repetition_ladder",
    "run_bench",
    "run_error_vs_budget",
    "run_error_vs_privacy",
    "run_error_vs_runtime",
    "split_queries",
    "trial_seed",
    "write_bench",
    "write_heatmap",
    "write_records",
]
