"""Classification heads scored by capsule length, plus two baselines.

Every head maps a feature vector ``x`` (dimension ``d``) to ``L`` class
scores and is trained with softmax cross-entropy over those scores:

* :class:`CapsuleHead` - score = length of the projection of ``x`` onto a
  learned ``c``-dimensional subspace per class.
* :class:`LinearHead` - score = ``w_l^T x``.
* :class:`GroupNeuronHead` - an unconstrained ``d x (L*c)`` linear map whose
  outputs are grouped ``c`` at a time and scored by group length; no Gram
  normalization.

Each head has a single-sample interface (``forward``/``loss``/``backward``)
and a vectorized batch interface (``forward_batch``/``backward_batch``) used
by the trainer.  Both routes compute the same numbers.
"""

from typing import Any, NamedTuple

import numpy as np

from . import capsule as cap
from . import linalg
from .errors import LabelError, ShapeError, StateError


class HeadOutput(NamedTuple):
    scores: np.ndarray
    predicted: int
    state: Any


def softmax_xent(scores, y):
    """Return ``(loss, dloss/dscores)`` for one score vector and label ``y``."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= y < scores.shape[0]:
        raise LabelError(f"label {y} outside [0, {scores.shape[0]})")
    m = scores.max()
    shifted = scores - m
    lse = np.log(np.exp(shifted).sum())
    probs = np.exp(shifted - lse)
    loss = max(float(lse - shifted[y]), 0.0)
    err = probs.copy()
    err[y] -= 1.0
    return loss, err


def softmax_xent_batch(scores, y):
    """Mean cross-entropy over rows of ``scores`` and its gradient."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    n, num_classes = scores.shape
    if y.shape != (n,) or (n and (y.min() < 0 or y.max() >= num_classes)):
        raise LabelError(f"labels must be {n} integers in [0, {num_classes})")
    m = scores.max(axis=1, keepdims=True)
    shifted = scores - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(shifted - lse)
    rows = np.arange(n)
    losses = np.maximum(lse[:, 0] - shifted[rows, y], 0.0)
    err = probs
    err[rows, y] -= 1.0
    return float(losses.mean()), err / n


def _argmax(scores):
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return int(np.argmax(scores))


class _Head:
    num_classes: int
    dim: int

    def _check_x(self, x):
        x = linalg.as_vector(x, "x")
        if x.shape[0] != self.dim:
            raise ShapeError(f"feature dim {x.shape[0]} != head dim {self.dim}")
        return x

    def _check_batch(self, X):
        X = linalg.as_matrix(X, "X")
        if X.shape[1] != self.dim:
            raise ShapeError(f"feature dim {X.shape[1]} != head dim {self.dim}")
        return X

    def forward(self, x):
        x = self._check_x(x)
        scores, cache = self.forward_batch(x[None, :])
        return HeadOutput(scores[0], _argmax(scores[0]), (x, cache))

    def loss(self, x, y):
        return softmax_xent(self.forward(x).scores, y)[0]

    def backward(self, x, y, output=None):
        """Gradients of the single-sample loss: ``(param_grads, grad_x)``."""
        x = self._check_x(x)
        if output is None:
            output = self.forward(x)
        elif not np.array_equal(output.state[0], x):
            raise StateError("forward state was computed for a different input")
        _, err = softmax_xent(output.scores, y)
        grads, dX = self.backward_batch(output.state[1], err[None, :])
        return grads, dX[0]

    def predict(self, X):
        scores, _ = self.forward_batch(X)
        return np.argmax(scores, axis=1)


class CapsuleHead(_Head):
    """``L`` capsule subspaces sharing the same ``(d, c)``."""

    kind = "capsule"

    def __init__(self, subspaces, reinit_every=cap.DEFAULT_REINIT_EVERY):
        subspaces = list(subspaces)
        self.reinit_every = reinit_every
        if len(subspaces) < 2:
            raise ShapeError("a capsule head needs at least two classes")
        shapes = {s.weight.shape for s in subspaces}
        if len(shapes) != 1:
            raise ShapeError(f"subspaces disagree on (d, c): {sorted(shapes)}")
        self.subspaces = subspaces

    @classmethod
    def random(cls, rng, dim, num_classes, capsule_dim, sigma_mode=cap.SigmaMode.EXACT,
               eps=linalg.DEFAULT_EPS, reinit_every=cap.DEFAULT_REINIT_EVERY):
        return cls(
            (cap.CapsuleSubspace.random(rng, dim, capsule_dim, sigma_mode=sigma_mode, eps=eps, index=i)
             for i in range(num_classes)),
            reinit_every,
        )

    @classmethod
    def from_weights(cls, weights, sigma_mode=cap.SigmaMode.EXACT, eps=linalg.DEFAULT_EPS,
                     reinit_every=cap.DEFAULT_REINIT_EVERY):
        return cls(
            (cap.CapsuleSubspace.from_weight(w, sigma_mode=sigma_mode, eps=eps, index=i)
             for i, w in enumerate(weights)),
            reinit_every,
        )

    @property
    def num_classes(self):
        return len(self.subspaces)

    @property
    def dim(self):
        return self.subspaces[0].dim

    @property
    def capsule_dim(self):
        return self.subspaces[0].capsule_dim

    @property
    def sigma_mode(self):
        return self.subspaces[0].sigma_mode

    def params(self):
        return [s.weight for s in self.subspaces]

    def set_params(self, weights):
        weights = list(weights)
        if len(weights) != len(self.subspaces):
            raise ShapeError(f"expected {len(self.subspaces)} weight matrices, got {len(weights)}")
        self.subspaces = cap.maintain_sigmas(self.subspaces, weights, self.reinit_every)

    # single-sample route, built directly on the capsule module

    def forward(self, x):
        x = self._check_x(x)
        projections = [cap.project(s, x) for s in self.subspaces]
        scores = np.array([p.length for p in projections])
        return HeadOutput(scores, _argmax(scores), (x, projections))

    def backward(self, x, y, output=None):
        """Per-class weight gradients and the feature gradient of the loss.

        The weight gradient of class ``l`` is ``(p_l - [l == y])`` times the
        length gradient of subspace ``l``; the feature gradient sums
        ``(p_l - [l == y]) v_l / ||v_l||`` over classes.
        """
        x = self._check_x(x)
        if output is None:
            output = self.forward(x)
        elif not np.array_equal(output.state[0], x):
            raise StateError("forward state was computed for a different input")
        _, err = softmax_xent(output.scores, y)
        grads_w = []
        grad_x = np.zeros_like(x)
        for e, s in zip(err, self.subspaces):
            gw, gx = cap.length_gradient(s, x)
            grads_w.append(e * gw)
            grad_x += e * gx
        return grads_w, grad_x

    # batch route

    def forward_batch(self, X):
        X = self._check_batch(X)
        W = np.stack([s.weight for s in self.subspaces])
        S = np.stack([s.sigma for s in self.subspaces])
        # (L, n, .) layout so every product is a stacked matmul
        U = (X @ W) @ S
        V = U @ W.transpose(0, 2, 1)
        lengths = np.linalg.norm(V, axis=2).T
        return lengths, (X, W, U, V, lengths)

    def backward_batch(self, cache, dscores):
        X, W, U, V, lengths = cache
        guard = np.maximum(cap.LENGTH_GUARD_REL * np.linalg.norm(X, axis=1), cap.LENGTH_GUARD_ABS)
        live = lengths > guard[:, None]
        coef = np.where(live, dscores / np.where(live, lengths, 1.0), 0.0).T[:, :, None]
        dX = (coef * V).sum(axis=0)
        dW = (X - V).transpose(0, 2, 1) @ (coef * U)
        return list(dW), dX


class LinearHead(_Head):
    """Plain linear logits ``W^T x`` with ``W`` of shape ``d x L``."""

    kind = "linear"

    def __init__(self, weights):
        self.weights = linalg.as_matrix(weights, "weights").copy()
        if self.weights.shape[1] < 2:
            raise ShapeError("a linear head needs at least two classes")

    @classmethod
    def random(cls, rng, dim, num_classes):
        return cls(rng.standard_normal((dim, num_classes)) / np.sqrt(dim))

    @property
    def num_classes(self):
        return self.weights.shape[1]

    @property
    def dim(self):
        return self.weights.shape[0]

    def params(self):
        return [self.weights]

    def set_params(self, weights):
        (w,) = weights
        self.weights = np.array(w, dtype=np.float64)

    def forward_batch(self, X):
        X = self._check_batch(X)
        return X @ self.weights, X

    def backward_batch(self, cache, dscores):
        X = cache
        return [X.T @ dscores], dscores @ self.weights.T


class GroupNeuronHead(_Head):
    """Linear outputs grouped into capsules of size ``group_dim``, scored by length."""

    kind = "group_neuron"

    def __init__(self, weights, group_dim):
        self.weights = linalg.as_matrix(weights, "weights").copy()
        if group_dim < 1 or self.weights.shape[1] % group_dim:
            raise ShapeError(f"output width {self.weights.shape[1]} not divisible by group_dim {group_dim}")
        self.group_dim = group_dim
        if self.num_classes < 2:
            raise ShapeError("a group-neuron head needs at least two classes")

    @classmethod
    def random(cls, rng, dim, num_classes, group_dim):
        return cls(rng.standard_normal((dim, num_classes * group_dim)) / np.sqrt(dim), group_dim)

    @property
    def num_classes(self):
        return self.weights.shape[1] // self.group_dim

    @property
    def dim(self):
        return self.weights.shape[0]

    @property
    def capsule_dim(self):
        return self.group_dim

    def params(self):
        return [self.weights]

    def set_params(self, weights):
        (w,) = weights
        self.weights = np.array(w, dtype=np.float64)

    def forward_batch(self, X):
        X = self._check_batch(X)
        Z = (X @ self.weights).reshape(X.shape[0], self.num_classes, self.group_dim)
        lengths = np.linalg.norm(Z, axis=2)
        return lengths, (X, Z, lengths)

    def backward_batch(self, cache, dscores):
        X, Z, lengths = cache
        guard = np.maximum(cap.LENGTH_GUARD_REL * np.linalg.norm(X, axis=1), cap.LENGTH_GUARD_ABS)
        live = lengths > guard[:, None]
        coef = np.where(live, dscores / np.where(live, lengths, 1.0), 0.0)
        dZ = (coef[:, :, None] * Z).reshape(X.shape[0], -1)
        return [X.T @ dZ], dZ @ self.weights.T
