"""Runnable harness: synthetic task, training, evaluation, CLI."""

from .data import Dataset, SyntheticTask, gen_data
from .evaluation import EvalReport, evaluate
from .report import build_report, write_report
from .training import (
    AdaptiveOptimizer,
    RunConfig,
    TrainResult,
    build_model,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train,
)

__all__ = [
    "AdaptiveOptimizer",
    "Dataset",
    "EvalReport",
    "RunConfig",
    "SyntheticTask",
    "TrainResult",
    "build_model",
    "build_report",
    "evaluate",
    "gen_data",
    "load_checkpoint",
    "lr_schedule",
    "save_checkpoint",
    "train",
    "write_report",
]
