"""Sequential-task training, evaluation and run comparison."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from . import rng as _rng
from .data import TaskSpec
from .errors import ContractError
from .fisher import fisher_diagonal, normalize_fisher
from .kalman import (
    DEFAULT_XI,
    KalmanState,
    consolidate,
    gated_update,
    observe,
    sgd_update,
    uncertainty_from_gradients,
)
from .network import NetworkParams, accuracy, init_params, loss_and_grad

StepHook = Callable[[int, int, NetworkParams], None]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs_per_task: int = 30
    alpha: float = 0.005
    xi: float = DEFAULT_XI
    seed: int = 0
    optimizer: Literal["kalman", "sgd"] = "kalman"
    uncertainty_measure: Literal["abs", "sq"] = "abs"
    fisher_batch_size: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.fisher_batch_size < 1:
            raise ContractError("batch sizes must be >= 1")
        if self.epochs_per_task < 1:
            raise ContractError(f"epochs_per_task must be >= 1, got {self.epochs_per_task}")
        if not 0.0 < self.alpha <= 1.0:
            raise ContractError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.xi > 0:
            raise ContractError(f"xi must be positive, got {self.xi}")
        if self.seed < 0:
            raise ContractError(f"seed must be non-negative, got {self.seed}")
        if self.optimizer not in ("kalman", "sgd"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")
        if self.uncertainty_measure not in ("abs", "sq"):
            raise ContractError(f"unknown uncertainty measure {self.uncertainty_measure!r}")


def train_task(
    params: NetworkParams,
    state: KalmanState,
    task: TaskSpec,
    config: TrainConfig,
    step_hook: StepHook | None = None,
) -> tuple[NetworkParams, KalmanState, list[np.ndarray]]:
    """Run ``epochs_per_task`` shuffled mini-batch epochs on one task.

    Returns the new parameters and state plus the batch gradients of the last
    epoch. The gate is only used in kalman mode after a first consolidation;
    otherwise every step is plain SGD and ``P`` is left alone.
    """
    mask = task.mask
    mask.indices(params.num_classes)
    x, y = task.train.inputs, task.train.labels
    if len(y) == 0:
        raise ContractError(f"task {task.task_id} has no training samples")
    state = state.copy()
    state.theta = params.flatten()
    gated = config.optimizer == "kalman" and state.consolidated
    history: list[np.ndarray] = []
    step = 0
    for epoch in range(config.epochs_per_task):
        history = []
        order = _rng.shuffle_order(len(y), config.seed, task.task_id, epoch)
        for start in range(0, len(y), config.batch_size):
            idx = order[start:start + config.batch_size]
            current = NetworkParams(params.layer_dims, state.theta)
            _, g = loss_and_grad(current, x[idx], y[idx], mask)
            history.append(g)
            if gated:
                state.theta, state.P = gated_update(state, observe(g, config.uncertainty_measure))
            else:
                state.theta = sgd_update(state.theta, g, state.learning_rate)
            step += 1
            if step_hook is not None:
                step_hook(task.task_id, step, NetworkParams(params.layer_dims, state.theta))
    return NetworkParams(params.layer_dims, state.theta.copy()), state, history


def end_of_task(
    params: NetworkParams, state: KalmanState, task: TaskSpec,
    history: Sequence[np.ndarray], config: TrainConfig,
) -> KalmanState:
    """Fisher -> normalise -> consolidate for a finished task."""
    f = fisher_diagonal(params, task.train.inputs, task.train.labels, task.mask, config.fisher_batch_size)
    U = uncertainty_from_gradients(history, config.uncertainty_measure)
    return consolidate(state, normalize_fisher(f), U, config.alpha)


def evaluate(params: NetworkParams, tasks: Sequence[TaskSpec]) -> list[float]:
    """Test accuracy on each task, each under its own head."""
    return [accuracy(params, t.test.inputs, t.test.labels, t.mask) for t in tasks]


def average_accuracy(matrix: Sequence[Sequence[float]], stage: int) -> float:
    """Mean of row ``stage`` (1-based) of a lower-triangular accuracy matrix."""
    if not 1 <= stage <= len(matrix):
        raise ContractError(f"stage {stage} outside 1..{len(matrix)}")
    row = matrix[stage - 1]
    return float(sum(row) / len(row))


@dataclass
class RunReport:
    config: dict
    layer_dims: list[int]
    task_classes: list[list[int]]
    accuracy_matrix: list[list[float]] = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    @property
    def average_curve(self) -> list[float]:
        return [average_accuracy(self.accuracy_matrix, s) for s in range(1, len(self.accuracy_matrix) + 1)]

    @property
    def final_accuracies(self) -> list[float]:
        return list(self.accuracy_matrix[-1]) if self.accuracy_matrix else []

    def to_dict(self) -> dict:
        """JSON-ready dict. Wall-clock time is left out so identical runs
        serialise identically; see :attr:`wall_clock_seconds`."""
        return {
            "config": self.config,
            "layer_dims": self.layer_dims,
            "task_classes": self.task_classes,
            "accuracy_matrix": self.accuracy_matrix,
            "average_accuracy": self.average_curve,
            "final_accuracies": self.final_accuracies,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["config"], list(d["layer_dims"]), [list(c) for c in d["task_classes"]],
                   [list(r) for r in d["accuracy_matrix"]])

    def matrix_csv(self) -> str:
        lines = ["stage,task,accuracy"]
        for s, row in enumerate(self.accuracy_matrix, start=1):
            lines += [f"{s},{t},{acc!r}" for t, acc in enumerate(row, start=1)]
        return "\n".join(lines) + "\n"


@dataclass
class SequenceProgress:
    """Everything needed to continue a task sequence from a boundary."""

    params: NetworkParams
    state: KalmanState
    report: RunReport

    @property
    def tasks_completed(self) -> int:
        return len(self.report.accuracy_matrix)


def start_sequence(tasks: Sequence[TaskSpec], layer_dims: Sequence[int], config: TrainConfig) -> SequenceProgress:
    params = init_params(layer_dims, config.seed)
    state = KalmanState.fresh(params.values, config.learning_rate, config.xi)
    report = RunReport(asdict(config), list(params.layer_dims), [list(t.active_classes) for t in tasks])
    return SequenceProgress(params, state, report)


def run_sequence(
    tasks: Sequence[TaskSpec],
    config: TrainConfig,
    layer_dims: Sequence[int] | None = None,
    progress: SequenceProgress | None = None,
    on_task_end: Callable[[SequenceProgress], None] | None = None,
    step_hook: StepHook | None = None,
    stop_after: int | None = None,
) -> RunReport:
    """Train the tasks in order, evaluating every seen task after each one.

    Pass ``progress`` (e.g. restored from a checkpoint) to resume after its
    last completed task; ``on_task_end`` sees the progress at each boundary.
    ``stop_after`` ends the run once that many tasks are complete.
    """
    if not tasks:
        raise ContractError("run_sequence needs at least one task")
    seen: set[int] = set()
    for t in tasks:
        if seen & set(t.active_classes):
            raise ContractError("task class sets must be pairwise disjoint")
        seen |= set(t.active_classes)
    if progress is None:
        if layer_dims is None:
            raise ContractError("layer_dims is required when not resuming")
        progress = start_sequence(tasks, layer_dims, config)
    elif progress.report.task_classes != [list(t.active_classes) for t in tasks]:
        raise ContractError("checkpoint was taken on a different task sequence")

    t0 = time.perf_counter()
    params, state, report = progress.params, progress.state, progress.report
    end = len(tasks) if stop_after is None else min(stop_after, len(tasks))
    for i in range(progress.tasks_completed, end):
        task = tasks[i]
        params, state, history = train_task(params, state, task, config, step_hook)
        if config.optimizer == "kalman":
            state = end_of_task(params, state, task, history, config)
        report.accuracy_matrix.append(evaluate(params, tasks[: i + 1]))
        if on_task_end is not None:
            on_task_end(SequenceProgress(params, state, report))
    report.wall_clock_seconds += time.perf_counter() - t0
    return report


def compare_runs(report_a: RunReport, report_b: RunReport) -> dict:
    """Deltas ``a - b`` of the average-accuracy curve and final per-task accuracy."""
    if report_a.task_classes != report_b.task_classes or report_a.layer_dims != report_b.layer_dims:
        raise ContractError("runs use different task sequences or architectures")
    if len(report_a.accuracy_matrix) != len(report_b.accuracy_matrix):
        raise ContractError("runs completed different numbers of tasks")
    avg = [a - b for a, b in zip(report_a.average_curve, report_b.average_curve)]
    final = [a - b for a, b in zip(report_a.final_accuracies, report_b.final_accuracies)]
    return {
        "a": report_a.config.get("optimizer"),
        "b": report_b.config.get("optimizer"),
        "average_accuracy_delta": avg,
        "final_accuracy_delta": final,
        "final_average_delta": avg[-1] if avg else 0.0,
    }
