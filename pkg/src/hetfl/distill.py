"""Decoupled distillation from the aggregated global head.

The loss for one sample splits the class distribution in two:

* the target pair ``[p_y, 1 - p_y]`` from the plain softmax, and
* the softmax over the non-target logits only, at temperature ``T``.

It is ``alpha * (KL(teacher pair || student pair) + KL(teacher rest || student rest))``,
averaged over the batch.  Temperature is applied to both sides of the
non-target term and to neither side of the target term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hetfl.errors import InvalidArgumentError, ShapeError
from hetfl.tensor_nn import GradTape, as_matrix, softmax


@dataclass(frozen=True)
class DkdParams:
    alpha: float = 0.5
    beta: float = 5.0
    t_max: int = 1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgumentError("alpha and beta must be non-negative")
        if self.t_max < 1:
            raise InvalidArgumentError(f"t_max must be >= 1, got {self.t_max}")


@dataclass(frozen=True)
class SplitDistribution:
    target_pair: np.ndarray
    nontarget: np.ndarray


def temperature(epoch: int, params: DkdParams) -> float:
    """Cosine schedule from ``2*beta + 1`` (epoch 0) down to exactly 1 at ``t_max``."""
    if not 1 <= epoch <= params.t_max:
        raise InvalidArgumentError(f"epoch {epoch} outside [1, {params.t_max}]")
    if epoch == params.t_max:
        return 1.0
    if 2 * epoch == params.t_max:
        return params.beta + 1.0
    return params.beta * (1.0 + math.cos(math.pi * epoch / params.t_max)) + 1.0


def _check_classes(n_classes: int) -> None:
    if n_classes < 2:
        raise InvalidArgumentError("need at least 2 classes for a non-target distribution")


def split_distribution(logits, label: int, temperature: float) -> SplitDistribution:
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    _check_classes(z.size)
    if not 0 <= label < z.size:
        raise InvalidArgumentError(f"label {label} out of range [0, {z.size})")
    p = softmax(z)[0]
    rest = np.delete(z, label)
    nontarget = softmax(rest, temperature)[0]
    p_target = p[label]
    return SplitDistribution(np.array([p_target, 1.0 - p_target]), nontarget)


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != q.shape:
        raise InvalidArgumentError(f"length mismatch: {p.size} vs {q.size}")
    mask = p > 0
    return max(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))), 0.0)


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))


def _split_logs(z: np.ndarray, onehot: np.ndarray, temp: float):
    """Log target pair (n, 2) and log non-target softmax (n, C) with the target slot at -inf."""
    lse_all = _logsumexp(z)
    z_rest = np.where(onehot, -np.inf, z)
    lse_rest = _logsumexp(z_rest)
    z_target = (z * onehot).sum(axis=1, keepdims=True)
    log_pair = np.hstack([z_target - lse_all, lse_rest - lse_all])
    zt = z_rest / temp
    log_rest = zt - _logsumexp(zt)
    return log_pair, log_rest


def dkd_loss(student_logits, teacher_logits, labels, params: DkdParams, temperature: float,
             tape: GradTape | None = None) -> float:
    """Batch-mean decoupled distillation loss.

    Teacher logits are constants.  When ``tape`` is given, the gradient with
    respect to the student logits is added to it.
    """
    s = as_matrix(student_logits)
    t = as_matrix(teacher_logits)
    if s.shape != t.shape:
        raise ShapeError(f"student {s.shape} and teacher {t.shape} logits differ in shape")
    n, c = s.shape
    _check_classes(c)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != n:
        raise ShapeError(f"{y.shape[0]} labels for {n} rows")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise InvalidArgumentError(f"label out of range [0, {c})")
    if not temperature > 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {temperature}")
    if params.alpha == 0:
        return 0.0

    onehot = np.zeros((n, c), dtype=bool)
    onehot[np.arange(n), y] = True
    s_pair, s_rest = _split_logs(s, onehot, temperature)
    t_pair, t_rest = _split_logs(t, onehot, temperature)
    tp_pair = np.exp(t_pair)
    tp_rest = np.exp(t_rest)

    with np.errstate(invalid="ignore"):
        kl_pair = np.where(tp_pair > 0, tp_pair * (t_pair - s_pair), 0.0).sum(axis=1)
        kl_rest = np.where(tp_rest > 0, tp_rest * (t_rest - s_rest), 0.0).sum(axis=1)
    per_row = np.maximum(kl_pair, 0.0) + np.maximum(kl_rest, 0.0)
    loss = float(params.alpha * per_row.mean())

    if tape is not None:
        # pair term, written without dividing by 1 - p_target:
        # +a on the target column, -a * (renormalized non-target prob) elsewhere
        sp_pair = np.exp(s_pair)
        a = tp_pair[:, 1:] * sp_pair[:, :1] - tp_pair[:, :1] * sp_pair[:, 1:]
        z_rest = np.where(onehot, -np.inf, s)
        q1 = np.exp(z_rest - _logsumexp(z_rest))
        g_pair = a * np.where(onehot, 1.0, -q1)
        # non-target term: (q_student - q_teacher) / T off the target column
        g_rest = np.where(onehot, 0.0, np.exp(s_rest) - tp_rest) / temperature
        tape.add_output_grad(params.alpha * (g_pair + g_rest) / n)
    return loss
