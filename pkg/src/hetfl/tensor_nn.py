"""Dense-network numerical engine.

A "matrix" here is a 2-D ``float64`` numpy array.  Layers are immutable value
objects; training produces new layers through :func:`sgd_step`.

Reverse mode works through a :class:`GradTape`: ``forward`` records the
intermediates, loss functions deposit their gradient w.r.t. the tape's output
logits, and ``backward`` turns that into one :class:`LayerGrad` per layer::

    tape = GradTape()
    logits = forward(layers, x, tape)
    loss = cross_entropy(logits, y, tape=tape)
    grads = backward(tape)
    layers = sgd_step(layers, grads, lr=0.1)
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hetfl._seeding import derive_rng
from hetfl.errors import InvalidArgumentError, ShapeError, StateError

Matrix = np.ndarray


class Activation(str, enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


def as_matrix(values) -> Matrix:
    """Coerce ``values`` to a 2-D float64 array (1-D input becomes one row)."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got array with ndim={m.ndim}")
    return m


@dataclass(frozen=True)
class DenseLayer:
    weights: Matrix
    bias: Matrix
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        w = as_matrix(self.weights)
        b = as_matrix(self.bias)
        if b.shape[0] != 1 or b.shape[1] != w.shape[1]:
            raise ShapeError(f"bias shape {b.shape} does not match weights {w.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def num_params(self) -> int:
        return self.weights.size + self.bias.size

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass(frozen=True)
class LayerGrad:
    weights: Matrix
    bias: Matrix


@dataclass
class GradTape:
    """Forward intermediates for one pass; consumed by a single ``backward``."""

    layers: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    pre_activations: list = field(default_factory=list)
    output: Matrix | None = None
    output_grad: Matrix | None = None
    consumed: bool = False

    def add_output_grad(self, grad: Matrix) -> None:
        """Accumulate d(loss)/d(output) contributed by one loss term."""
        if self.consumed:
            raise StateError("tape already consumed by backward")
        if self.output is None:
            raise StateError("tape has no recorded forward pass")
        grad = as_matrix(grad)
        if grad.shape != self.output.shape:
            raise ShapeError(
                f"loss gradient shape {grad.shape} != tape output shape {self.output.shape}"
            )
        if self.output_grad is None:
            self.output_grad = grad.copy()
        else:
            self.output_grad = self.output_grad + grad


def init_layer(seed: int, in_dim: int, out_dim: int, activation=Activation.IDENTITY) -> DenseLayer:
    """Glorot-uniform weights, zero bias; a pure function of its arguments."""
    if in_dim < 1 or out_dim < 1:
        raise InvalidArgumentError(f"layer dims must be >= 1, got ({in_dim}, {out_dim})")
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    rng = derive_rng(seed, "init_layer", in_dim, out_dim)
    weights = rng.uniform(-limit, limit, size=(in_dim, out_dim))
    return DenseLayer(weights, np.zeros((1, out_dim)), Activation(activation))


def forward(layers: Sequence[DenseLayer], inputs, tape: GradTape | None = None) -> Matrix:
    x = as_matrix(inputs)
    if tape is not None:
        if tape.output is not None:
            raise StateError("tape already holds a forward pass; use a fresh tape")
        tape.layers = list(layers)
    for i, layer in enumerate(layers):
        if x.shape[1] != layer.in_dim:
            raise ShapeError(
                f"layer {i}: expected input with {layer.in_dim} columns, got {x.shape[1]}"
            )
        z = x @ layer.weights + layer.bias
        if tape is not None:
            tape.inputs.append(x)
            tape.pre_activations.append(z)
        x = np.maximum(z, 0.0) if layer.activation is Activation.RELU else z
    if tape is not None:
        tape.output = x
    return x


def log_softmax(logits, temperature: float = 1.0) -> Matrix:
    if not temperature > 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {temperature}")
    z = as_matrix(logits) / temperature
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits, temperature: float = 1.0) -> Matrix:
    if not temperature > 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {temperature}")
    z = as_matrix(logits) / temperature
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, n_rows: int, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != n_rows:
        raise ShapeError(f"{y.shape[0]} labels for {n_rows} rows")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise InvalidArgumentError(f"label out of range [0, {n_classes})")
    return y


def cross_entropy(logits, labels, tape: GradTape | None = None) -> float:
    """Batch-mean cross-entropy; optionally deposits its gradient on ``tape``."""
    z = as_matrix(logits)
    y = _check_labels(labels, z.shape[0], z.shape[1])
    logp = log_softmax(z)
    rows = np.arange(z.shape[0])
    loss = float(-logp[rows, y].mean())
    if tape is not None:
        grad = np.exp(logp)
        grad[rows, y] -= 1.0
        tape.add_output_grad(grad / z.shape[0])
    return loss


def backward(tape: GradTape, loss_grad: float = 1.0) -> list[LayerGrad]:
    """Exact gradients of ``loss_grad * loss`` for every layer on the tape."""
    if tape.consumed:
        raise StateError("tape already consumed by backward")
    if tape.output is None:
        raise StateError("tape has no recorded forward pass")
    tape.consumed = True
    if tape.output_grad is None:
        delta = np.zeros_like(tape.output)
    else:
        delta = tape.output_grad * loss_grad
    grads: list[LayerGrad] = [None] * len(tape.layers)  # type: ignore[list-item]
    for i in range(len(tape.layers) - 1, -1, -1):
        layer = tape.layers[i]
        if layer.activation is Activation.RELU:
            delta = delta * (tape.pre_activations[i] > 0)
        grads[i] = LayerGrad(tape.inputs[i].T @ delta, delta.sum(axis=0, keepdims=True))
        delta = delta @ layer.weights.T
    return grads


def sgd_step(params, grads, lr: float):
    """``p - lr * g`` for a layer, a matrix, or a sequence of either."""
    if lr < 0:
        raise InvalidArgumentError(f"learning rate must be >= 0, got {lr}")
    if isinstance(params, DenseLayer):
        return DenseLayer(
            _sub(params.weights, grads.weights, lr), _sub(params.bias, grads.bias, lr),
            params.activation,
        )
    if isinstance(params, np.ndarray):
        return _sub(params, grads, lr)
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    return [sgd_step(p, g, lr) for p, g in zip(params, grads)]


def _sub(p: Matrix, g, lr: float) -> Matrix:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != p.shape:
        raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    return p - lr * g


def accuracy(logits, labels) -> float:
    y = np.asarray(labels).reshape(-1)
    if y.size == 0:
        raise InvalidArgumentError("accuracy of an empty batch is undefined")
    return float((as_matrix(logits).argmax(axis=1) == y).mean())
