"""Per-parameter Kalman-filtered gradient descent.

Every quantity here is a flat vector with one entry per network parameter:
the filter is diagonal, so the identity in the covariance update is the
scalar 1 and all products are element-wise.

Before the first task boundary there is no prior, and training is plain SGD.
:func:`consolidate` turns the just-trained weights and their uncertainty into
the prior for the next task and switches the gate on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .fisher import merge_fisher, threshold_importance

UncertaintyMeasure = Literal["abs", "sq"]
DEFAULT_XI = 1e-8


def _same_length(*arrays: np.ndarray) -> None:
    n = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != n:
            raise ShapeError(f"vector shapes differ: {n} vs {a.shape}")


@dataclass
class KalmanState:
    """Filter state carried through a task sequence.

    ``importance`` is the merged, normalised but un-thresholded Fisher; it is
    what consolidation compares against. ``f_star`` is its thresholded form
    and is the gate used at every step.
    """

    theta: np.ndarray
    P: np.ndarray
    importance: np.ndarray
    f_star: np.ndarray
    learning_rate: float
    xi: float = DEFAULT_XI
    consolidated: bool = False

    def __post_init__(self):
        for name in ("theta", "P", "importance", "f_star"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        _same_length(self.theta, self.P, self.importance, self.f_star)
        if self.xi <= 0:
            raise ContractError(f"xi must be positive, got {self.xi}")
        if self.learning_rate < 0:
            raise ContractError(f"learning_rate must be non-negative, got {self.learning_rate}")

    @classmethod
    def fresh(cls, theta: np.ndarray, learning_rate: float, xi: float = DEFAULT_XI) -> "KalmanState":
        theta = np.array(theta, dtype=np.float64, copy=True)
        zeros = np.zeros_like(theta)
        return cls(theta, zeros.copy(), zeros.copy(), zeros.copy(), learning_rate, xi)

    def copy(self) -> "KalmanState":
        return replace(
            self, theta=self.theta.copy(), P=self.P.copy(),
            importance=self.importance.copy(), f_star=self.f_star.copy(),
        )


@dataclass(frozen=True)
class StepObservation:
    gradient: np.ndarray
    R: np.ndarray


def observe(gradient: np.ndarray, measure: UncertaintyMeasure = "abs") -> StepObservation:
    """Pair a batch gradient with the observation uncertainty derived from it."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if measure == "abs":
        R = np.abs(gradient)
    elif measure == "sq":
        R = gradient * gradient
    else:
        raise ContractError(f"unknown uncertainty measure {measure!r}")
    return StepObservation(gradient, R)


def predict(theta_prev: np.ndarray, gradient: np.ndarray, learning_rate: float) -> np.ndarray:
    theta_prev = np.asarray(theta_prev, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    _same_length(theta_prev, gradient)
    return theta_prev - learning_rate * gradient


sgd_update = predict


def gain(P_prev: np.ndarray, R: np.ndarray, xi: float) -> np.ndarray:
    P_prev = np.asarray(P_prev, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    _same_length(P_prev, R)
    if xi <= 0:
        raise ContractError(f"xi must be positive, got {xi}")
    if (P_prev < 0).any() or (R < 0).any():
        raise ContractError("P and R must be non-negative")
    return P_prev / (P_prev + R + xi)


def step_multiplier(K: np.ndarray, f_star: np.ndarray) -> np.ndarray:
    """Fraction of the raw SGD step each parameter actually takes."""
    return K * f_star + (1.0 - f_star)


def gated_update(state: KalmanState, obs: StepObservation) -> tuple[np.ndarray, np.ndarray]:
    """One filtered step: returns ``(theta_new, P_new)``.

    ``theta_new = theta + m * (predict(theta) - theta)`` with the multiplier
    from :func:`step_multiplier`. It is evaluated as ``theta - lr * (m * g)``,
    which is the same quantity but reproduces the SGD step bit-for-bit when
    ``m == 1`` and leaves ``theta`` untouched when ``m == 0``.
    """
    _same_length(state.theta, obs.gradient, obs.R)
    K = gain(state.P, obs.R, state.xi)
    m = step_multiplier(K, state.f_star)
    theta_new = state.theta - state.learning_rate * (m * obs.gradient)
    P_new = (1.0 - K * state.f_star) * state.P
    return theta_new, P_new


def uncertainty_from_gradients(
    gradient_history: Sequence[np.ndarray], measure: UncertaintyMeasure = "abs"
) -> np.ndarray:
    """Mean per-parameter gradient magnitude over a list of batch gradients."""
    if len(gradient_history) == 0:
        raise ContractError("uncertainty_from_gradients needs at least one gradient")
    stacked = np.stack([observe(g, measure).R for g in gradient_history])
    return stacked.mean(axis=0)


def consolidate(
    state: KalmanState,
    task_fisher_norm: np.ndarray,
    end_of_task_uncertainty: np.ndarray,
    alpha: float,
) -> KalmanState:
    """Fold a finished task into the prior.

    Uncertainty is refreshed only where the new task's importance strictly
    exceeds everything stored so far (everywhere, at the first boundary).
    Importance is merged by element-wise max and re-thresholded.
    """
    new_imp = np.asarray(task_fisher_norm, dtype=np.float64)
    U = np.asarray(end_of_task_uncertainty, dtype=np.float64)
    _same_length(state.theta, new_imp, U)
    if (U < 0).any():
        raise ContractError("end-of-task uncertainty must be non-negative")
    if state.consolidated:
        P = np.where(new_imp > state.importance, U, state.P)
    else:
        P = U.copy()
    merged = merge_fisher(state.importance, new_imp)
    return replace(
        state,
        theta=state.theta.copy(),
        P=P,
        importance=merged,
        f_star=threshold_importance(merged, alpha),
        consolidated=True,
    )
