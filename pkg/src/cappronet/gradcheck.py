"""Finite-difference verification of the analytical gradients.

Three suites, each reporting the worst entrywise relative error it saw:

* ``capsule`` - capsule length w.r.t. the subspace weights and the feature
  vector, over random ``(d, c)``;
* ``head`` - softmax loss of the capsule, linear and group-neuron heads
  w.r.t. every weight and the feature vector;
* ``end_to_end`` - loss of an MLP backbone + capsule head w.r.t. every
  parameter.

Numerical derivatives are central differences with step
``1e-6 * max(1, |p|)``.  The oracles evaluate the loss with their own
``np.linalg.solve`` on the Gram matrix instead of the cached sigma.
Relative error of an entry is ``|a - n| / max(|a|, |n|, floor)`` where
``floor = 1e-3 * max|n|`` keeps entries that are zero up to rounding from
dominating.
"""

import dataclasses
import itertools

import numpy as np

from . import capsule as cap
from .backbone import Mlp
from .heads import CapsuleHead, GroupNeuronHead, LinearHead
from .train import Model

TOLERANCE = 1e-5
FLOOR_FRACTION = 1e-3


@dataclasses.dataclass
class SuiteResult:
    name: str
    worst: float
    worst_case: tuple
    trials: int

    @property
    def passed(self):
        return self.worst < TOLERANCE


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    floor = max(FLOOR_FRACTION * np.abs(n).max(), 1e-300)
    return float((np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)).max())


def numeric_gradient(f, p):
    """Central differences of scalar ``f()`` w.r.t. every entry of array ``p`` (perturbed in place)."""
    g = np.zeros_like(p)
    flat, gflat = p.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = 1e-6 * max(1.0, abs(orig))
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def oracle_length(w, x):
    t = w.T @ x
    return float(np.sqrt(t @ np.linalg.solve(w.T @ w, t)))


def oracle_xent(scores, y):
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()) - scores[y])


def capsule_suite(dims=(8, 64), capsule_dims=(1, 2, 4, 8), trials=100, seed=0,
                  length_gradient=None):
    length_gradient = length_gradient or cap.length_gradient
    combos = [(d, c) for d, c in itertools.product(dims, capsule_dims) if c < d]
    worst, worst_case = 0.0, None
    for t in range(trials):
        d, c = combos[t % len(combos)]
        rng = np.random.default_rng([seed, t])
        w = rng.standard_normal((d, c)) / np.sqrt(d)
        x = rng.standard_normal(d)
        s = cap.CapsuleSubspace.from_weight(w)
        gw, gx = length_gradient(s, x)
        wp, xp = w.copy(), x.copy()
        nw = numeric_gradient(lambda: oracle_length(wp, x), wp)
        nx = numeric_gradient(lambda: oracle_length(w, xp), xp)
        err = max(relative_error(gw, nw), relative_error(gx, nx))
        if c == 1:
            # weight-norm route must agree with the capsule length
            err = max(err, abs(cap.weight_norm_length(w[:, 0], x) - oracle_length(w, x)) / oracle_length(w, x))
        if err >= worst:
            worst, worst_case = err, (d, c, seed, t)
    return SuiteResult("capsule", worst, worst_case, trials)


def _oracle_scores(kind, weights, x, group_dim=None):
    if kind == "capsule":
        return np.array([oracle_length(w, x) for w in weights])
    if kind == "linear":
        return x @ weights[0]
    z = x @ weights[0]
    return np.linalg.norm(z.reshape(-1, group_dim), axis=1)


def head_suite(trials=20, seed=0, num_classes=4, dim=16, capsule_dim=2):
    worst, worst_case = 0.0, None
    for t in range(trials):
        rng = np.random.default_rng([seed, 1000 + t])
        x = rng.standard_normal(dim)
        y = int(rng.integers(num_classes))
        heads = [
            CapsuleHead.random(rng, dim, num_classes, capsule_dim),
            LinearHead.random(rng, dim, num_classes),
            GroupNeuronHead.random(rng, dim, num_classes, capsule_dim),
        ]
        for head in heads:
            grads, gx = head.backward(x, y)
            weights = [p.copy() for p in head.params()]
            xp = x.copy()

            def f():
                return oracle_xent(_oracle_scores(head.kind, weights, xp, capsule_dim), y)

            errs = [relative_error(g, numeric_gradient(f, p)) for p, g in zip(weights, grads)]
            errs.append(relative_error(gx, numeric_gradient(f, xp)))
            err = max(errs)
            if err >= worst:
                worst, worst_case = err, (dim, capsule_dim, seed, t, head.kind)
    return SuiteResult("head", worst, worst_case, trials)


def end_to_end_suite(trials=20, seed=0, sizes=(6, 10, 8), num_classes=3, capsule_dim=2):
    """Checks both the per-sample route and the batched training route."""
    worst, worst_case = 0.0, None
    for t in range(trials):
        rng = np.random.default_rng([seed, 2000 + t])
        mlp = Mlp.random(rng, list(sizes))
        head = CapsuleHead.random(rng, sizes[-1], num_classes, capsule_dim)
        inp = rng.standard_normal(sizes[0])
        y = int(rng.integers(num_classes))

        feats, tape = mlp.forward(inp)
        grads_w, gfeat = head.backward(feats, y)
        grads_b, _ = mlp.backward(tape, gfeat)
        _, _, batch_grads = Model(mlp, head).loss_and_grads(inp[None, :], np.array([y]))

        params = [p.copy() for p in mlp.params() + head.params()]
        nb = 2 * len(mlp.layers)

        def f():
            h = inp
            for i, layer in enumerate(mlp.layers):
                z = h @ params[2 * i] + params[2 * i + 1]
                h = np.maximum(z, 0.0) if layer.activation == "relu" else z
            return oracle_xent(np.array([oracle_length(w, h) for w in params[nb:]]), y)

        errs = []
        for p, g, gb in zip(params, grads_b + grads_w, batch_grads):
            num = numeric_gradient(f, p)
            errs += [relative_error(g, num), relative_error(gb, num)]
        err = max(errs)
        if err >= worst:
            worst, worst_case = err, (sizes[-1], capsule_dim, seed, t)
    return SuiteResult("end_to_end", worst, worst_case, trials)


def run_all(dims=(8, 64), capsule_dims=(1, 2, 4, 8), trials=100, seed=0, length_gradient=None):
    return [
        capsule_suite(dims, capsule_dims, trials, seed, length_gradient),
        head_suite(max(trials // 5, 1), seed),
        end_to_end_suite(max(trials // 5, 20), seed),
    ]
