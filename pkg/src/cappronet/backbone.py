"""Small ReLU multilayer perceptron with hand-written backprop.

Stands in for a convolutional backbone: it maps raw inputs to the feature
vectors that a head consumes.  Weights are stored ``in x out`` so a batch
``X`` (rows are samples) maps as ``X @ W + b``.
"""

import dataclasses
from typing import NamedTuple

import numpy as np

from . import linalg
from .errors import ShapeError, StateError

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)


@dataclasses.dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.weight = linalg.as_matrix(self.weight, "weight")
        self.bias = linalg.as_vector(self.bias, "bias")
        if self.bias.shape[0] != self.weight.shape[1]:
            raise ShapeError(f"bias dim {self.bias.shape[0]} != layer width {self.weight.shape[1]}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class Tape(NamedTuple):
    owner: int
    inputs: list
    preacts: list


class Mlp:
    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ShapeError(f"layer widths do not chain: {a.weight.shape} -> {b.weight.shape}")
        if self.layers[-1].activation != IDENTITY:
            raise ShapeError("the final layer must use the identity activation")

    @classmethod
    def random(cls, rng, sizes):
        """He-initialized net; ReLU on hidden layers, identity on the last."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            act = IDENTITY if i == len(sizes) - 2 else RELU
            w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[1]

    def params(self):
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def set_params(self, params):
        if len(params) != 2 * len(self.layers):
            raise ShapeError("parameter list does not match layer count")
        for layer, w, b in zip(self.layers, params[::2], params[1::2]):
            layer.weight = np.array(w, dtype=np.float64)
            layer.bias = np.array(b, dtype=np.float64)

    def forward_batch(self, X):
        X = linalg.as_matrix(X, "X")
        if X.shape[1] != self.input_dim:
            raise ShapeError(f"input dim {X.shape[1]} != {self.input_dim}")
        inputs, preacts = [], []
        h = X
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.weight + layer.bias
            preacts.append(z)
            h = np.maximum(z, 0.0) if layer.activation == RELU else z
        return h, Tape(id(self), inputs, preacts)

    def backward_batch(self, tape, grad_out):
        """Return ``(param_grads, grad_input)``; ``param_grads`` matches :meth:`params`."""
        if tape.owner != id(self) or len(tape.preacts) != len(self.layers):
            raise StateError("tape was not recorded by this network")
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != tape.preacts[-1].shape:
            raise StateError(f"gradient shape {grad_out.shape} != output shape {tape.preacts[-1].shape}")
        grads = [None] * (2 * len(self.layers))
        g = grad_out
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            if layer.activation == RELU:
                # subgradient at zero is taken as zero
                g = g * (tape.preacts[i] > 0.0)
            grads[2 * i] = tape.inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ layer.weight.T
        return grads, g

    def forward(self, x):
        x = linalg.as_vector(x, "input")
        out, tape = self.forward_batch(x[None, :])
        return out[0], tape

    def backward(self, tape, grad_features):
        grad_features = linalg.as_vector(grad_features, "grad_features")
        grads, g = self.backward_batch(tape, grad_features[None, :])
        return grads, g[0]
