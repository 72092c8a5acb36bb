"""End-to-end training of backbone + head with Nesterov SGD.

All randomness (data, initialization, shuffling) is drawn from named
streams of a single seed (:func:`cappronet.data.rng_stream`), so identical
configs give bit-identical runs.
"""

import dataclasses
import time
from typing import Optional

import numpy as np

from . import capsule as cap
from . import data as data_mod
from .backbone import Mlp
from .errors import DivergenceError, InputError
from .heads import CapsuleHead, GroupNeuronHead, LinearHead, softmax_xent_batch

HEAD_KINDS = ("capsule", "linear", "group_neuron")


@dataclasses.dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.02
    momentum: float = 0.9
    # (epoch, multiplier) pairs; the multiplier applies from that epoch on and
    # multiplies onto earlier ones.  Empty -> one x0.1 drop at half the epochs.
    lr_schedule: tuple = ()
    head_kind: str = "capsule"
    capsule_dim: int = 4
    sigma_mode: str = "exact"
    eps: float = 1e-7
    reinit_every: int = cap.DEFAULT_REINIT_EVERY
    hidden_dim: int = 128
    feature_dim: int = 64
    track_sigma_steps: int = 0
    # dataset
    dataset: str = "synthetic"
    num_classes: int = 10
    input_dim: int = 64
    per_class: int = 500
    test_per_class: int = 100
    spread: float = 0.3
    subspace_rank: int = 4
    variant: str = "subspace"
    val_fraction: float = 0.1
    normalize: bool = True
    train_path: str = ""
    test_path: str = ""
    train_labels_path: str = ""
    test_labels_path: str = ""
    label_column: str = "label"

    def __post_init__(self):
        self.lr_schedule = tuple(tuple(p) for p in self.lr_schedule)
        self.validate()

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise InputError("learning_rate must be >= 0 and momentum in [0, 1)")
        if self.head_kind not in HEAD_KINDS:
            raise InputError(f"head_kind must be one of {HEAD_KINDS}")
        if self.capsule_dim < 1:
            raise InputError("capsule_dim must be >= 1")
        if self.head_kind == "capsule" and self.capsule_dim >= self.feature_dim:
            raise InputError("capsule_dim must be smaller than feature_dim")
        cap.SigmaMode(self.sigma_mode)
        if self.eps < 0 or self.reinit_every < 1:
            raise InputError("eps must be >= 0 and reinit_every >= 1")
        epochs = [e for e, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(epochs, epochs[1:])) or any(e < 0 for e in epochs):
            raise InputError("lr_schedule epochs must be non-negative and strictly increasing")
        if any(m <= 0 for _, m in self.lr_schedule):
            raise InputError("lr_schedule multipliers must be positive")
        if self.dataset not in ("synthetic", "csv", "idx"):
            raise InputError(f"unknown dataset kind {self.dataset!r}")
        if not 0 <= self.val_fraction < 1:
            raise InputError("val_fraction must lie in [0, 1)")

    def schedule(self):
        if self.lr_schedule:
            return self.lr_schedule
        return ((self.epochs // 2, 0.1),) if self.epochs > 1 else ()

    def lr_at(self, epoch):
        lr = self.learning_rate
        for start, mult in self.schedule():
            if epoch >= start:
                lr *= mult
        return lr

    def label(self):
        if self.head_kind == "linear":
            return "linear"
        return f"{self.head_kind}(c={self.capsule_dim})"


def build_data(config):
    """Dataset described by ``config``, split and normalized."""
    if config.dataset == "synthetic":
        ds = data_mod.synth_blobs(
            config.seed, config.num_classes, config.input_dim, config.per_class,
            config.spread, config.subspace_rank, config.test_per_class, config.variant,
        )
    elif config.dataset == "csv":
        ds = data_mod.load_csv(config.train_path, config.label_column, config.test_path or None,
                               config.num_classes)
    else:
        ds = data_mod.load_idx(config.train_path, config.train_labels_path,
                               config.test_path or None, config.test_labels_path or None,
                               config.num_classes)
    if config.val_fraction > 0:
        ds = data_mod.split(ds, config.val_fraction, config.seed)
    if config.normalize:
        ds = ds.normalized()
    return ds


class Model:
    """A backbone feeding a head."""

    def __init__(self, backbone, head):
        self.backbone = backbone
        self.head = head

    @classmethod
    def build(cls, config, input_dim, num_classes):
        rng_b = data_mod.rng_stream(config.seed, "init.backbone")
        rng_h = data_mod.rng_stream(config.seed, "init.head")
        backbone = Mlp.random(rng_b, [input_dim, config.hidden_dim, config.feature_dim])
        d = config.feature_dim
        if config.head_kind == "capsule":
            head = CapsuleHead.random(rng_h, d, num_classes, config.capsule_dim,
                                      sigma_mode=cap.SigmaMode(config.sigma_mode), eps=config.eps,
                                      reinit_every=config.reinit_every)
        elif config.head_kind == "linear":
            head = LinearHead.random(rng_h, d, num_classes)
        else:
            head = GroupNeuronHead.random(rng_h, d, num_classes, config.capsule_dim)
        return cls(backbone, head)

    def params(self):
        return self.backbone.params() + self.head.params()

    def set_params(self, params):
        nb = len(self.backbone.params())
        self.backbone.set_params(params[:nb])
        self.head.set_params(params[nb:])

    def features(self, X):
        return self.backbone.forward_batch(X)[0]

    def scores(self, X):
        return self.head.forward_batch(self.features(X))[0]

    def predict(self, X):
        return np.argmax(self.scores(X), axis=1)

    def loss(self, X, y):
        return softmax_xent_batch(self.scores(X), y)[0]

    def loss_and_grads(self, X, y):
        """Mean batch loss, batch scores and gradients aligned with :meth:`params`."""
        feats, tape = self.backbone.forward_batch(X)
        scores, cache = self.head.forward_batch(feats)
        loss, dscores = softmax_xent_batch(scores, y)
        head_grads, dfeats = self.head.backward_batch(cache, dscores)
        bb_grads, _ = self.backbone.backward_batch(tape, dfeats)
        return loss, scores, bb_grads + head_grads


class NesterovSGD:
    """SGD with Nesterov momentum: ``buf = mu*buf + g; p -= lr*(g + mu*buf)``."""

    def __init__(self, momentum):
        self.momentum = momentum
        self.buffers = None

    def step(self, params, grads, lr):
        if self.buffers is None:
            self.buffers = [np.zeros_like(p) for p in params]
        out = []
        for p, g, buf in zip(params, grads, self.buffers):
            buf *= self.momentum
            buf += g
            out.append(p - lr * (g + self.momentum * buf))
        return out


@dataclasses.dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    train_loss: float
    train_error: float
    val_error: Optional[float]
    mean_step_time: float
    mean_head_time: float


@dataclasses.dataclass
class RunRecord:
    label: str
    seed: int
    epochs: list = dataclasses.field(default_factory=list)
    step_losses: list = dataclasses.field(default_factory=list)
    test_error: Optional[float] = None
    mean_step_time: float = 0.0
    mean_head_time: float = 0.0
    sigma_tracking: list = dataclasses.field(default_factory=list)
    eps_fallbacks: int = 0
    model: Optional[Model] = dataclasses.field(default=None, repr=False, compare=False)

    @property
    def head_time_fraction(self):
        """Share of each training step spent inside the head."""
        return self.mean_head_time / self.mean_step_time if self.mean_step_time else 0.0

    def to_records(self):
        """Line-delimited record dicts: one per epoch, then a summary."""
        out = [dict(type="epoch", label=self.label, seed=self.seed, **dataclasses.asdict(e))
               for e in self.epochs]
        out.append(dict(
            type="summary", label=self.label, seed=self.seed, test_error=self.test_error,
            final_train_loss=self.epochs[-1].train_loss if self.epochs else None,
            mean_step_time=self.mean_step_time, mean_head_time=self.mean_head_time,
            head_time_fraction=self.head_time_fraction,
            max_sigma_tracking=max(self.sigma_tracking) if self.sigma_tracking else None,
            eps_fallbacks=self.eps_fallbacks,
        ))
        return out


def evaluate(model, X, y):
    """Return ``(error_rate, per_class_accuracy)``; classes absent from ``y`` get NaN."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(y) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    pred = model.predict(X)
    correct = pred == y
    acc = np.full(model.head.num_classes, np.nan)
    for k in range(model.head.num_classes):
        mask = y == k
        if mask.any():
            acc[k] = correct[mask].mean()
    return float(1.0 - correct.mean()), acc


def _shadow_hyperpower(shadow, head):
    """Advance shadow hyper-power sigmas one step against the head's new weights."""
    out, devs = [], []
    for sig, s in zip(shadow, head.subspaces):
        stepped = cap.hyperpower_step(dataclasses.replace(s, sigma=sig)).sigma
        out.append(stepped)
        devs.append(np.linalg.norm(stepped - s.sigma) / np.linalg.norm(s.sigma))
    return out, max(devs)


def train(config, data=None):
    """Train a fresh model; the returned record carries it in ``.model``.

    Raises :class:`DivergenceError` (with ``.step``) on a non-finite loss.
    """
    config.validate()
    if data is None:
        data = build_data(config)
    model = Model.build(config, data.input_dim, data.num_classes)
    opt = NesterovSGD(config.momentum)
    rng = data_mod.rng_stream(config.seed, "train.shuffle")
    record = RunRecord(config.label(), config.seed)
    n = len(data.y_train)
    if n == 0:
        raise InputError("empty train split")
    track = config.track_sigma_steps if isinstance(model.head, CapsuleHead) else 0
    shadow = [s.sigma.copy() for s in model.head.subspaces] if track else None

    step = 0
    step_times, head_times = [], []
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        wrong = 0
        ep_step, ep_head = [], []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            X, y = data.x_train[idx], data.y_train[idx]
            t0 = time.perf_counter()
            feats, tape = model.backbone.forward_batch(X)
            th = time.perf_counter()
            scores, cache = model.head.forward_batch(feats)
            loss, dscores = softmax_xent_batch(scores, y)
            head_grads, dfeats = model.head.backward_batch(cache, dscores)
            head_t = time.perf_counter() - th
            bb_grads, _ = model.backbone.backward_batch(tape, dfeats)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at step {step}", step=step)
            new = opt.step(model.params(), bb_grads + head_grads, lr)
            nb = len(bb_grads)
            model.backbone.set_params(new[:nb])
            th = time.perf_counter()
            model.head.set_params(new[nb:])
            head_t += time.perf_counter() - th
            ep_step.append(time.perf_counter() - t0)
            ep_head.append(head_t)
            if shadow is not None and step < track:
                shadow, dev = _shadow_hyperpower(shadow, model.head)
                record.sigma_tracking.append(float(dev))
            if isinstance(model.head, CapsuleHead):
                record.eps_fallbacks += sum(s.eps_used > 0 for s in model.head.subspaces)
            record.step_losses.append(float(loss))
            loss_sum += loss * len(idx)
            wrong += int((np.argmax(scores, axis=1) != y).sum())
            step += 1
        step_times += ep_step
        head_times += ep_head
        val_error = evaluate(model, data.x_val, data.y_val)[0] if len(data.y_val) else None
        record.epochs.append(EpochRecord(
            epoch, lr, loss_sum / n, wrong / n, val_error,
            float(np.mean(ep_step)), float(np.mean(ep_head)),
        ))
    record.mean_step_time = float(np.mean(step_times))
    record.mean_head_time = float(np.mean(head_times))
    if len(data.y_test):
        record.test_error = evaluate(model, data.x_test, data.y_test)[0]
    record.model = model
    return record


@dataclasses.dataclass
class ComparisonRow:
    label: str
    head_kind: str
    capsule_dim: int
    errors: list
    mean_error: float
    std_error: float
    mean_step_time: float
    overhead_vs_linear: Optional[float] = None


def compare_heads(base_config, heads, seeds=(0, 1, 2, 3, 4)):
    """Train every head on the same data/backbone init for each seed.

    ``heads`` is a list of ``(head_kind, capsule_dim)`` pairs.  Returns one
    :class:`ComparisonRow` per entry (mean and sample std of test error over
    seeds) and the list of all :class:`RunRecord` objects.  When a linear
    head is listed, each row also reports its step-time overhead relative to
    it.
    """
    seeds = list(seeds)
    if not seeds or not heads:
        raise InputError("need at least one seed and one head")
    runs = {i: [] for i in range(len(heads))}
    for seed in seeds:
        data = build_data(dataclasses.replace(base_config, seed=seed))
        for i, (kind, c) in enumerate(heads):
            cfg = dataclasses.replace(base_config, seed=seed, head_kind=kind, capsule_dim=c)
            runs[i].append(train(cfg, data))
    rows = []
    for i, (kind, c) in enumerate(heads):
        errs = [r.test_error for r in runs[i]]
        rows.append(ComparisonRow(
            runs[i][0].label, kind, c, errs, float(np.mean(errs)),
            float(np.std(errs, ddof=1)) if len(errs) > 1 else 0.0,
            float(np.mean([r.mean_step_time for r in runs[i]])),
        ))
    linear = [r for r in rows if r.head_kind == "linear"]
    if linear:
        base = linear[0].mean_step_time
        for r in rows:
            r.overhead_vs_linear = (r.mean_step_time - base) / base
    return rows, [r for i in range(len(heads)) for r in runs[i]]
