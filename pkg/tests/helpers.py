"""Oracles shared by several test modules.  None of them reuse package internals."""
from __future__ import annotations

import math

import numpy as np

from hetfl.tensor_nn import Activation, DenseLayer, forward


def random_net(rng: np.random.Generator, dims, relu_hidden=True):
    layers = []
    for i in range(len(dims) - 1):
        act = Activation.RELU if relu_hidden and i < len(dims) - 2 else Activation.IDENTITY
        layers.append(DenseLayer(rng.normal(size=(dims[i], dims[i + 1])),
                                 rng.normal(size=(1, dims[i + 1])) * 0.1, act))
    return layers


def numeric_grads(loss_of_layers, layers, h=1e-5):
    """Central differences for every weight and bias entry."""
    out = []
    for li, layer in enumerate(layers):
        per = {}
        for name in ("weights", "bias"):
            base = getattr(layer, name)
            g = np.zeros_like(base)
            for idx in np.ndindex(base.shape):
                vals = []
                for sign in (1.0, -1.0):
                    p = base.copy()
                    p[idx] += sign * h
                    new = DenseLayer(p, layer.bias, layer.activation) if name == "weights" \
                        else DenseLayer(layer.weights, p, layer.activation)
                    trial = list(layers)
                    trial[li] = new
                    vals.append(loss_of_layers(trial))
                g[idx] = (vals[0] - vals[1]) / (2 * h)
            per[name] = g
        out.append(per)
    return out


def rel_error(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def scalar_softmax(z, t=1.0):
    m = max(v / t for v in z)
    e = [math.exp(v / t - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def scalar_kl(p, q):
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)


def scalar_dkd(student, teacher, label, alpha, temp):
    """Straight-line composition: KL of target pairs at T=1 plus KL of non-target softmax at T."""
    ps = scalar_softmax(student)
    pt = scalar_softmax(teacher)
    pair_s = [ps[label], sum(v for i, v in enumerate(ps) if i != label)]
    pair_t = [pt[label], sum(v for i, v in enumerate(pt) if i != label)]
    rest_s = scalar_softmax([v for i, v in enumerate(student) if i != label], temp)
    rest_t = scalar_softmax([v for i, v in enumerate(teacher) if i != label], temp)
    return alpha * (scalar_kl(pair_t, pair_s) + scalar_kl(rest_t, rest_s))
