"""
Checking the reverse-mode engine against finite differences
===========================================================

A two-layer ReLU network, cross-entropy on a small batch, and a central
difference estimate for every weight.
"""
import numpy as np

from hetfl.tensor_nn import (
    Activation, DenseLayer, GradTape, backward, cross_entropy, forward, init_layer,
)

layers = [init_layer(0, 4, 6, Activation.RELU), init_layer(1, 6, 3)]
rng = np.random.default_rng(0)
x = rng.normal(size=(5, 4))
y = np.array([0, 2, 1, 1, 0])

# one forward pass records what backward needs
tape = GradTape()
loss = cross_entropy(forward(layers, x, tape), y, tape=tape)
grads = backward(tape)
print(f"loss {loss:.6f}")

# perturb a single entry of the first weight matrix
h = 1e-5
w = layers[0].weights
numeric = np.zeros_like(w)
for idx in np.ndindex(w.shape):
    vals = []
    for sign in (1, -1):
        p = w.copy()
        p[idx] += sign * h
        trial = [DenseLayer(p, layers[0].bias, layers[0].activation), layers[1]]
        vals.append(cross_entropy(forward(trial, x), y))
    numeric[idx] = (vals[0] - vals[1]) / (2 * h)

err = np.linalg.norm(numeric - grads[0].weights) / np.linalg.norm(numeric)
print(f"relative error on layer 0 weights: {err:.2e}")
