"""Datasets: seeded synthetic generators, CSV and IDX loaders, splitting.

A :class:`DatasetSplit` holds train / validation / test arrays.  Inputs are
``(n, input_dim)`` float64 arrays and labels ``(n,)`` int64 arrays.
"""

import csv
import dataclasses
import struct
import zlib

import numpy as np

from .errors import InputError, ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def rng_stream(seed, name):
    """Independent generator for the named stream of a run seeded with ``seed``."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclasses.dataclass
class DatasetSplit:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int
    mean: np.ndarray = None
    std: np.ndarray = None

    def __post_init__(self):
        dims = {a.shape[1] for a in (self.x_train, self.x_val, self.x_test)}
        if len(dims) != 1:
            raise InputError(f"splits disagree on input dim: {sorted(dims)}")
        for x, y in self._pairs():
            if x.shape[0] != y.shape[0]:
                raise InputError("input and label counts differ")
            if y.size and (y.min() < 0 or y.max() >= self.num_classes):
                raise InputError(f"labels must lie in [0, {self.num_classes})")

    def _pairs(self):
        return [(self.x_train, self.y_train), (self.x_val, self.y_val), (self.x_test, self.y_test)]

    @property
    def input_dim(self):
        return self.x_train.shape[1]

    def normalized(self):
        """Standardize every split with per-feature stats of the train split."""
        if not len(self.x_train):
            raise InputError("cannot normalize with an empty train split")
        mean = self.x_train.mean(axis=0)
        std = self.x_train.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return dataclasses.replace(
            self,
            x_train=(self.x_train - mean) / std,
            x_val=(self.x_val - mean) / std,
            x_test=(self.x_test - mean) / std,
            mean=mean,
            std=std,
        )


def _empty(dim):
    return np.zeros((0, dim)), np.zeros(0, dtype=np.int64)


def synth_blobs(seed, num_classes=10, dim=64, per_class=500, spread=0.3, subspace_rank=4,
                test_per_class=100, variant="subspace"):
    """Seeded multi-class data.

    ``variant="subspace"``: class ``k`` draws ``B_k a + spread * noise`` with
    ``B_k`` a random orthonormal ``dim x subspace_rank`` basis and
    ``a ~ N(0, I)``.  ``variant="isotropic"``: class ``k`` is a Gaussian blob
    ``mu_k + noise`` around a random mean of norm ``sqrt(subspace_rank)``
    with noise scale ``1 + spread``.
    """
    if num_classes < 2 or dim < 1 or per_class < 1 or test_per_class < 0 or spread < 0:
        raise InputError("invalid synthetic dataset sizes")
    if not 1 <= subspace_rank < dim:
        raise InputError(f"subspace_rank must lie in [1, {dim})")
    if variant not in ("subspace", "isotropic"):
        raise InputError(f"unknown variant {variant!r}")
    rng = rng_stream(seed, "data.synth")
    total = per_class + test_per_class
    xs_tr, ys_tr, xs_te, ys_te = [], [], [], []
    for k in range(num_classes):
        if variant == "subspace":
            basis, _ = np.linalg.qr(rng.standard_normal((dim, subspace_rank)))
            coeffs = rng.standard_normal((total, subspace_rank))
            x = coeffs @ basis.T + spread * rng.standard_normal((total, dim))
        else:
            mean = rng.standard_normal(dim)
            mean *= np.sqrt(subspace_rank) / np.linalg.norm(mean)
            x = mean + (1.0 + spread) * rng.standard_normal((total, dim))
        xs_tr.append(x[:per_class])
        xs_te.append(x[per_class:])
        ys_tr.append(np.full(per_class, k))
        ys_te.append(np.full(test_per_class, k))
    x_val, y_val = _empty(dim)
    return DatasetSplit(
        np.concatenate(xs_tr), np.concatenate(ys_tr).astype(np.int64),
        x_val, y_val,
        np.concatenate(xs_te), np.concatenate(ys_te).astype(np.int64),
        num_classes,
    )


def split(data, val_fraction, seed):
    """Carve a validation split out of ``data``'s train split.

    Shuffles with a seeded generator.  Stratifies by class (rounding each
    class's share) when every class has at least ``1/val_fraction`` samples,
    otherwise takes ``round(n * val_fraction)`` samples overall.
    """
    if not 0 < val_fraction < 1:
        raise InputError("val_fraction must lie strictly between 0 and 1")
    x, y = data.x_train, data.y_train
    n = len(y)
    if n < 2:
        raise InputError("need at least two training samples to split")
    rng = rng_stream(seed, "data.split")
    counts = np.bincount(y, minlength=data.num_classes)
    present = counts[counts > 0]
    if present.min() * val_fraction >= 1 - 1e-12:
        val_idx = []
        for k in np.flatnonzero(counts):
            members = np.flatnonzero(y == k)
            rng.shuffle(members)
            val_idx.extend(members[: int(round(len(members) * val_fraction))])
        val_idx = np.array(sorted(val_idx), dtype=np.int64)
    else:
        n_val = int(round(n * val_fraction))
        if not 0 < n_val < n:
            raise InputError(f"val_fraction {val_fraction} leaves an empty split for {n} samples")
        val_idx = np.sort(rng.permutation(n)[:n_val])
    mask = np.zeros(n, dtype=bool)
    mask[val_idx] = True
    train_idx = np.flatnonzero(~mask)
    return dataclasses.replace(
        data,
        x_train=x[train_idx], y_train=y[train_idx],
        x_val=x[val_idx], y_val=y[val_idx],
    )


def _read_csv_rows(path, label_column):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ParseError(f"{path}: label column {label_column!r} not in header")
        li = header.index(label_column)
        xs, ys = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                label = float(row[li])
                values = [float(c) for i, c in enumerate(row) if i != li]
            except ValueError as exc:
                raise ParseError(f"{path}:{line}: {exc}") from None
            if label != int(label) or label < 0:
                raise ParseError(f"{path}:{line}: label must be a non-negative integer")
            if not np.all(np.isfinite(values)):
                raise ParseError(f"{path}:{line}: non-finite value")
            xs.append(values)
            ys.append(int(label))
    if not ys:
        raise ParseError(f"{path}: no data rows")
    return np.array(xs, dtype=np.float64), np.array(ys, dtype=np.int64)


def load_csv(path, label_column="label", test_path=None, num_classes=None):
    """Load a headered CSV; every non-label column is a numeric feature.

    Rows go to the train split (``test_path`` fills the test split).
    ``num_classes`` defaults to ``max label + 1``.
    """
    x, y = _read_csv_rows(path, label_column)
    if test_path is not None:
        x_te, y_te = _read_csv_rows(test_path, label_column)
        if x_te.shape[1] != x.shape[1]:
            raise ParseError(f"{test_path}: feature count {x_te.shape[1]} != {x.shape[1]}")
    else:
        x_te, y_te = _empty(x.shape[1])
    k = num_classes or int(max(y.max(), y_te.max() if len(y_te) else 0)) + 1
    x_val, y_val = _empty(x.shape[1])
    return DatasetSplit(x, y, x_val, y_val, x_te, y_te, max(k, 2))


def save_csv(path, x, y, label_column="label"):
    """Write samples with ``repr`` float precision, so they reload exactly."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i}" for i in range(x.shape[1])] + [label_column])
        for row, label in zip(x, y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def _read_header(buf, path, magic, ndims):
    need = 4 * (1 + ndims)
    if len(buf) < need:
        raise ParseError(f"{path}: truncated header at byte {len(buf)} (need {need})")
    found = struct.unpack_from(">I", buf, 0)[0]
    if found != magic:
        raise ParseError(f"{path}: bad magic 0x{found:08x} at byte 0, expected 0x{magic:08x}")
    return struct.unpack_from(f">{ndims}I", buf, 4), need


def read_idx_images(path):
    with open(path, "rb") as f:
        buf = f.read()
    (count, rows, cols), offset = _read_header(buf, path, IDX_IMAGES_MAGIC, 3)
    size = count * rows * cols
    if len(buf) - offset != size:
        raise ParseError(f"{path}: payload is {len(buf) - offset} bytes from byte {offset}, expected {size}")
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=offset)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(path):
    with open(path, "rb") as f:
        buf = f.read()
    (count,), offset = _read_header(buf, path, IDX_LABELS_MAGIC, 1)
    if len(buf) - offset != count:
        raise ParseError(f"{path}: payload is {len(buf) - offset} bytes from byte {offset}, expected {count}")
    return np.frombuffer(buf, dtype=np.uint8, offset=offset).astype(np.int64)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 ``(n, rows, cols)`` images and labels in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_idx(images_path, labels_path, test_images_path=None, test_labels_path=None, num_classes=None):
    """Load IDX image/label files; pixels are scaled to ``[0, 1]``."""
    def pair(ip, lp):
        x, y = read_idx_images(ip), read_idx_labels(lp)
        if len(x) != len(y):
            raise ParseError(f"{ip} has {len(x)} images but {lp} has {len(y)} labels")
        return x, y

    x, y = pair(images_path, labels_path)
    if test_images_path is not None:
        x_te, y_te = pair(test_images_path, test_labels_path)
    else:
        x_te, y_te = _empty(x.shape[1])
    k = num_classes or int(max(y.max() if len(y) else 0, y_te.max() if len(y_te) else 0)) + 1
    x_val, y_val = _empty(x.shape[1])
    return DatasetSplit(x, y, x_val, y_val, x_te, y_te, max(k, 2))
