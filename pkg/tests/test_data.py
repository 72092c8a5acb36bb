import struct

import numpy as np
import pytest

from cappronet import data as D
from cappronet.errors import InputError, ParseError


def test_synth_is_seeded():
    a = D.synth_blobs(3, num_classes=3, dim=8, per_class=20, subspace_rank=2, test_per_class=5)
    b = D.synth_blobs(3, num_classes=3, dim=8, per_class=20, subspace_rank=2, test_per_class=5)
    c = D.synth_blobs(4, num_classes=3, dim=8, per_class=20, subspace_rank=2, test_per_class=5)
    assert np.array_equal(a.x_train, b.x_train) and np.array_equal(a.x_test, b.x_test)
    assert not np.array_equal(a.x_train, c.x_train)
    assert a.x_train.shape == (60, 8) and a.x_test.shape == (15, 8)
    assert np.array_equal(np.bincount(a.y_train), [20, 20, 20])


def test_synth_noiseless_classes_are_low_rank():
    ds = D.synth_blobs(0, num_classes=4, dim=10, per_class=30, spread=0.0, subspace_rank=3)
    for k in range(4):
        sv = np.linalg.svd(ds.x_train[ds.y_train == k], compute_uv=False)
        assert sv[3] < 1e-10 * sv[0]


def test_synth_isotropic_variant():
    ds = D.synth_blobs(0, num_classes=3, dim=6, per_class=200, subspace_rank=2, variant="isotropic")
    means = [ds.x_train[ds.y_train == k].mean(axis=0) for k in range(3)]
    assert all(abs(np.linalg.norm(m) - np.sqrt(2)) < 0.4 for m in means)


@pytest.mark.parametrize("kw", [
    dict(per_class=0), dict(subspace_rank=64), dict(num_classes=1), dict(variant="nope"), dict(spread=-1.0),
])
def test_synth_rejects_bad_sizes(kw):
    with pytest.raises(InputError):
        D.synth_blobs(0, **kw)


def _toy(n_per_class, num_classes):
    x = np.arange(n_per_class * num_classes, dtype=float)[:, None] * np.ones((1, 2))
    y = np.repeat(np.arange(num_classes), n_per_class)
    e = np.zeros((0, 2))
    return D.DatasetSplit(x, y, e, np.zeros(0, int), e, np.zeros(0, int), num_classes)


def test_split_sizes_and_stratification():
    s = D.split(_toy(10, 10), 0.1, seed=1)
    assert len(s.y_val) == 10 and len(s.y_train) == 90
    assert np.array_equal(np.bincount(s.y_val, minlength=10), np.ones(10))
    assert not set(s.x_val[:, 0]) & set(s.x_train[:, 0])
    s2 = D.split(_toy(10, 10), 0.1, seed=1)
    assert np.array_equal(s.x_val, s2.x_val)


def test_split_unstratified_when_classes_are_small():
    s = D.split(_toy(5, 20), 0.1, seed=0)
    assert len(s.y_val) == 10 and len(s.y_train) == 90


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.2])
def test_split_rejects_bad_fraction(frac):
    with pytest.raises(InputError):
        D.split(_toy(5, 2), frac, seed=0)


def test_normalization_uses_train_only():
    ds = _toy(5, 2)
    ds.x_test = np.array([[100.0, 100.0]])
    ds.y_test = np.array([0])
    n = ds.normalized()
    np.testing.assert_allclose(n.x_train.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(n.mean, ds.x_train.mean(axis=0))
    np.testing.assert_allclose(n.x_test, (ds.x_test - n.mean) / n.std)


def test_csv_load(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,label,b\n1,0,2\n3,1,4\n5,0,6.5\n-1,2,0\n")
    ds = D.load_csv(p, "label")
    assert ds.x_train.shape == (4, 2)
    np.testing.assert_array_equal(ds.x_train[2], [5, 6.5])
    np.testing.assert_array_equal(ds.y_train, [0, 1, 0, 2])
    assert ds.num_classes == 3


@pytest.mark.parametrize("body, where", [
    ("a,label\n1,0\n2\n", ":3"),
    ("a,label\n1,0\nx,1\n", ":3"),
    ("a,label\n1,0.5\n", ":2"),
    ("a,b\n1,0\n", "label column"),
    ("", "header"),
])
def test_csv_errors(tmp_path, body, where):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(ParseError, match=where):
        D.load_csv(p, "label")


def test_csv_round_trip(tmp_path, rng):
    x = rng.standard_normal((12, 5)) * 1e3
    y = rng.integers(3, size=12)
    D.save_csv(tmp_path / "rt.csv", x, y)
    ds = D.load_csv(tmp_path / "rt.csv", "label")
    assert np.abs(ds.x_train - x).max() <= 1e-9
    np.testing.assert_array_equal(ds.y_train, y)


def test_idx_single_image(tmp_path):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    D.write_idx(img, lab, np.array([[[0, 128], [255, 64]]]), [7])
    ds = D.load_idx(img, lab)
    np.testing.assert_allclose(ds.x_train[0], [0, 128 / 255, 1, 64 / 255])
    assert ds.y_train.tolist() == [7]
    raw = img.read_bytes()
    assert raw[:4] == b"\x00\x00\x08\x03" and struct.unpack(">3I", raw[4:16]) == (1, 2, 2)


def test_idx_errors(tmp_path):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    D.write_idx(img, lab, np.zeros((2, 2, 2)), [1, 2, 3])
    with pytest.raises(ParseError, match="2 images but .* 3 labels"):
        D.load_idx(img, lab)
    img.write_bytes(b"\x00\x00\x08\x01" + bytes(12))
    with pytest.raises(ParseError, match="magic"):
        D.read_idx_images(img)
    img.write_bytes(struct.pack(">4I", 0x803, 2, 2, 2) + bytes(5))
    with pytest.raises(ParseError, match="byte 16"):
        D.read_idx_images(img)
    img.write_bytes(b"\x00\x00")
    with pytest.raises(ParseError, match="truncated"):
        D.read_idx_images(img)


def test_rng_streams_are_independent():
    a = D.rng_stream(1, "x").standard_normal(3)
    b = D.rng_stream(1, "y").standard_normal(3)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, D.rng_stream(1, "x").standard_normal(3))
