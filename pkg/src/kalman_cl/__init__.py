"""Continual learning with a Kalman-filtered, Fisher-gated SGD optimiser."""

__version__ = "0.1.0"

from .data import LabeledDataset, TaskSpec, load_idx, split_tasks, synthetic_digits, synthetic_split
from .fisher import fisher_diagonal, merge_fisher, normalize_fisher, threshold_importance
from .harness import RunReport, TrainConfig, average_accuracy, compare_runs, run_sequence, train_task
from .kalman import KalmanState, consolidate, gain, gated_update, predict, sgd_update, uncertainty_from_gradients
from .network import HeadMask, NetworkParams, accuracy, backward, forward, init_params, masked_loss

__all__ = [
    "HeadMask", "KalmanState", "LabeledDataset", "NetworkParams", "RunReport", "TaskSpec", "TrainConfig",
    "accuracy", "average_accuracy", "backward", "compare_runs", "consolidate", "fisher_diagonal", "forward",
    "gain", "gated_update", "init_params", "load_idx", "masked_loss", "merge_fisher", "normalize_fisher",
    "predict", "run_sequence", "sgd_update", "split_tasks", "synthetic_digits", "synthetic_split",
    "threshold_importance", "train_task", "uncertainty_from_gradients",
]
