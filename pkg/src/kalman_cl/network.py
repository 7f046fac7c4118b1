"""A small fully-connected ReLU network with multi-head softmax output.

Parameters live in one flat float64 vector; :class:`NetworkParams` exposes
per-layer weight and bias arrays as views into it, so optimisers work on the
flat vector and the network reads the same memory. Weight matrices are stored
``out x in`` and flattened row-major, each followed by its bias:

    [W0 (out0*in0), b0 (out0), W1 (out1*in1), b1 (out1), ...]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng as _rng
from .errors import ContractError, ShapeError

PROB_FLOOR = 1e-12


def _check_dims(layer_dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ShapeError(f"layer_dims needs >= 2 positive entries, got {list(layer_dims)}")
    return dims


def param_count(layer_dims: Sequence[int]) -> int:
    dims = _check_dims(layer_dims)
    return sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))


@dataclass
class NetworkParams:
    """Layer-structured view of a flat parameter vector."""

    layer_dims: tuple[int, ...]
    values: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]] = field(init=False, repr=False)

    def __post_init__(self):
        self.layer_dims = _check_dims(self.layer_dims)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != param_count(self.layer_dims):
            raise ShapeError(
                f"expected {param_count(self.layer_dims)} parameters for dims "
                f"{list(self.layer_dims)}, got shape {values.shape}"
            )
        self.values = values
        self.layers = []
        offset = 0
        for n_in, n_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = values[offset:offset + n_out * n_in].reshape(n_out, n_in)
            offset += n_out * n_in
            b = values[offset:offset + n_out]
            offset += n_out
            self.layers.append((w, b))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def flatten(self) -> np.ndarray:
        return self.values.copy()

    @classmethod
    def unflatten(cls, layer_dims: Sequence[int], vector: np.ndarray) -> "NetworkParams":
        return cls(tuple(layer_dims), np.array(vector, dtype=np.float64, copy=True))

    @classmethod
    def from_layers(cls, layers: Iterable[tuple[np.ndarray, np.ndarray]]) -> "NetworkParams":
        layers = list(layers)
        if not layers:
            raise ShapeError("need at least one layer")
        dims = [layers[0][0].shape[1]]
        parts = []
        for w, b in layers:
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2 or w.shape[1] != dims[-1] or b.shape != (w.shape[0],):
                raise ShapeError(f"layer shapes do not chain: W{w.shape}, b{b.shape} after dim {dims[-1]}")
            dims.append(w.shape[0])
            parts += [w.ravel(), b]
        return cls(tuple(dims), np.concatenate(parts))


@dataclass(frozen=True)
class HeadMask:
    """The output classes a task is allowed to predict."""

    active_classes: tuple[int, ...]

    def __post_init__(self):
        classes = tuple(sorted({int(c) for c in self.active_classes}))
        if not classes or classes[0] < 0:
            raise ContractError(f"head mask needs non-empty, non-negative classes: {self.active_classes}")
        object.__setattr__(self, "active_classes", classes)

    @classmethod
    def all(cls, num_classes: int) -> "HeadMask":
        return cls(tuple(range(num_classes)))

    def indices(self, num_classes: int) -> np.ndarray:
        if self.active_classes[-1] >= num_classes:
            raise ContractError(f"mask class {self.active_classes[-1]} >= num_classes {num_classes}")
        return np.asarray(self.active_classes, dtype=np.intp)


@dataclass
class ForwardCache:
    """Layer inputs and pre-activations from one forward pass."""

    layer_dims: tuple[int, ...]
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]


def init_params(layer_dims: Sequence[int], seed: int) -> NetworkParams:
    """Glorot-uniform weights and zero biases from the ``(seed, INIT)`` stream."""
    dims = _check_dims(layer_dims)
    gen = _rng.stream(seed, _rng.INIT)
    layers = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        layers.append((gen.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out)))
    return NetworkParams.from_layers(layers)


def forward(params: NetworkParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != params.input_dim:
        raise ShapeError(f"batch must be (B>=1, {params.input_dim}), got {x.shape}")
    inputs, pre = [], []
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    return h, ForwardCache(params.layer_dims, inputs, pre)


def _check_labels(labels: np.ndarray, batch: int, active: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ShapeError(f"labels must have shape ({batch},), got {labels.shape}")
    if not np.isin(labels, active).all():
        bad = sorted(set(labels.tolist()) - set(active.tolist()))
        raise ContractError(f"labels {bad} are outside the head mask {active.tolist()}")
    return labels


def _masked_softmax(logits: np.ndarray, active: np.ndarray) -> np.ndarray:
    z = logits[:, active]
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def masked_loss(logits: np.ndarray, labels: np.ndarray, mask: HeadMask) -> float:
    """Mean cross-entropy of the softmax restricted to ``mask``'s classes."""
    logits = np.asarray(logits, dtype=np.float64)
    active = mask.indices(logits.shape[1])
    labels = _check_labels(labels, logits.shape[0], active)
    probs = _masked_softmax(logits, active)
    cols = np.searchsorted(active, labels)
    picked = np.maximum(probs[np.arange(len(labels)), cols], PROB_FLOOR)
    return float(-np.log(picked).mean())


def backward(
    params: NetworkParams, cache: ForwardCache, labels: np.ndarray, mask: HeadMask
) -> np.ndarray:
    """Gradient of :func:`masked_loss` with respect to the flat parameters."""
    if cache.layer_dims != params.layer_dims or len(cache.pre_activations) != len(params.layers):
        raise ContractError("forward cache was produced by a different architecture")
    logits = cache.pre_activations[-1]
    batch = logits.shape[0]
    active = mask.indices(params.num_classes)
    labels = _check_labels(labels, batch, active)

    probs = _masked_softmax(logits, active)
    probs[np.arange(batch), np.searchsorted(active, labels)] -= 1.0
    delta = np.zeros_like(logits)
    delta[:, active] = probs / batch

    grads = []
    for i in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[i]
        a = cache.inputs[i]
        if a.shape[1] != w.shape[1] or a.shape[0] != batch:
            raise ContractError("forward cache does not match the parameters")
        grads.append(delta.sum(axis=0))
        grads.append((delta.T @ a).ravel())
        if i > 0:
            delta = (delta @ w) * (cache.pre_activations[i - 1] > 0)
    return np.concatenate(grads[::-1])


def loss_and_grad(
    params: NetworkParams, inputs: np.ndarray, labels: np.ndarray, mask: HeadMask
) -> tuple[float, np.ndarray]:
    logits, cache = forward(params, inputs)
    return masked_loss(logits, labels, mask), backward(params, cache, labels, mask)


def predict_classes(params: NetworkParams, inputs: np.ndarray, mask: HeadMask) -> np.ndarray:
    """Argmax over the active classes; ties go to the lowest class index."""
    logits, _ = forward(params, inputs)
    active = mask.indices(params.num_classes)
    return active[np.argmax(logits[:, active], axis=1)]


def accuracy(params: NetworkParams, inputs: np.ndarray, labels: np.ndarray, mask: HeadMask) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ContractError("accuracy needs a non-empty dataset")
    return float(np.mean(predict_classes(params, inputs, mask) == labels))
