"""Diagonal Fisher information and the importance gate built from it."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError
from .network import HeadMask, NetworkParams, loss_and_grad


def fisher_diagonal(
    params: NetworkParams,
    inputs: np.ndarray,
    labels: np.ndarray,
    mask: HeadMask,
    batch_size: int = 1,
) -> np.ndarray:
    """Empirical diagonal Fisher: mean over batches of the squared loss gradient.

    Gradients are taken of the masked cross-entropy at the true labels, so
    with ``batch_size=1`` this is the per-sample empirical Fisher. Batches are
    consecutive slices in dataset order and weighted equally; a short final
    batch counts as one batch.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ContractError("fisher_diagonal needs a non-empty dataset")
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    total = np.zeros(params.values.size)
    n_batches = 0
    for start in range(0, len(labels), batch_size):
        _, g = loss_and_grad(params, inputs[start:start + batch_size], labels[start:start + batch_size], mask)
        total += g * g
        n_batches += 1
    return total / n_batches


def normalize_fisher(f: np.ndarray) -> np.ndarray:
    """Divide by the largest entry; an all-zero Fisher maps to all zeros."""
    f = np.asarray(f, dtype=np.float64)
    peak = f.max(initial=0.0)
    if peak <= 0.0:
        return np.zeros_like(f)
    return f / peak


def threshold_importance(f_star: np.ndarray, alpha: float) -> np.ndarray:
    """Saturate entries at or above ``alpha`` to exactly 1 (long-term memory)."""
    if not 0.0 < alpha <= 1.0:
        raise ContractError(f"alpha must lie in (0, 1], got {alpha}")
    f_star = np.asarray(f_star, dtype=np.float64)
    return np.where(f_star < alpha, f_star, 1.0)


def merge_fisher(accumulated: np.ndarray, new_task: np.ndarray) -> np.ndarray:
    accumulated = np.asarray(accumulated, dtype=np.float64)
    new_task = np.asarray(new_task, dtype=np.float64)
    if accumulated.shape != new_task.shape:
        raise ShapeError(f"cannot merge importance of shapes {accumulated.shape} and {new_task.shape}")
    return np.maximum(accumulated, new_task)
