"""Model container, config files, gradient-check harness, exports, benchmark."""

import csv
import struct

import numpy as np
import pytest

from cappronet import bench, gradcheck, serialize, visualize
from cappronet import capsule as cap
from cappronet.config import dump_config, load_config, parse_pairs
from cappronet.errors import InputError, ParseError, UnsupportedDimensionError
from cappronet.train import Model, TrainConfig, build_data, evaluate, train

SMALL = dict(epochs=2, num_classes=3, input_dim=10, per_class=40, test_per_class=15,
             subspace_rank=2, hidden_dim=16, feature_dim=8, batch_size=16)


@pytest.mark.parametrize("kind, mode", [("capsule", "exact"), ("capsule", "hyperpower"),
                                        ("linear", "exact"), ("group_neuron", "exact")])
def test_model_round_trip_is_bit_exact(tmp_path, kind, mode):
    cfg = TrainConfig(**SMALL, head_kind=kind, sigma_mode=mode, capsule_dim=2)
    rec = train(cfg)
    path = tmp_path / "m.cpn"
    serialize.save_model(path, rec.model)
    loaded = serialize.load_model(path)
    for a, b in zip(rec.model.params(), loaded.params()):
        assert np.array_equal(a, b)
    ds = build_data(cfg)
    assert np.array_equal(rec.model.scores(ds.x_test), loaded.scores(ds.x_test))
    assert evaluate(loaded, ds.x_test, ds.y_test)[0] == rec.test_error
    if kind == "capsule":
        for a, b in zip(rec.model.head.subspaces, loaded.head.subspaces):
            assert np.array_equal(a.sigma, b.sigma)
            assert a.sigma_mode is b.sigma_mode and a.steps_since_exact == b.steps_since_exact


def test_model_container_layout(tmp_path):
    rec = train(TrainConfig(**SMALL, capsule_dim=2))
    path = tmp_path / "m.cpn"
    serialize.save_model(path, rec.model)
    raw = path.read_bytes()
    assert raw[:4] == b"CPNM"
    version, hlen = struct.unpack_from("<II", raw, 4)
    assert version == 1
    (ndim,) = struct.unpack_from("<I", raw, 12 + hlen)
    shape = struct.unpack_from("<2I", raw, 16 + hlen)
    assert ndim == 2 and shape == (10, 16)
    first = np.frombuffer(raw, "<f8", count=1, offset=24 + hlen)[0]
    assert first == rec.model.backbone.layers[0].weight[0, 0]


def test_model_container_corruption(tmp_path):
    rec = train(TrainConfig(**SMALL, capsule_dim=2))
    path = tmp_path / "m.cpn"
    serialize.save_model(path, rec.model)
    raw = path.read_bytes()
    (tmp_path / "bad.cpn").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParseError, match="magic"):
        serialize.load_model(tmp_path / "bad.cpn")
    (tmp_path / "short.cpn").write_bytes(raw[:-8])
    with pytest.raises(ParseError, match="truncated"):
        serialize.load_model(tmp_path / "short.cpn")


def test_config_parse_and_dump(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# toy\nepochs = 7\nhead_kind = linear  # inline\nlr_schedule = 2:0.5, 5:0.1\nnormalize = false\n")
    cfg = load_config(p, ["seed=3", "spread=0.5"])
    assert (cfg.epochs, cfg.head_kind, cfg.seed, cfg.spread, cfg.normalize) == (7, "linear", 3, 0.5, False)
    assert cfg.lr_schedule == ((2, 0.5), (5, 0.1))
    p2 = tmp_path / "c2.txt"
    p2.write_text(dump_config(cfg))
    again = load_config(p2)
    assert again == cfg


@pytest.mark.parametrize("line, msg", [
    ("nope = 1", "unknown key"), ("epochs 3", "key = value"), ("epochs = x", "bad value"),
    ("normalize = maybe", "bad value"),
])
def test_config_rejects(line, msg):
    with pytest.raises(ParseError, match=msg):
        parse_pairs([line])


def test_config_validation_is_a_parse_error():
    with pytest.raises(ParseError, match="invalid config"):
        load_config(None, ["epochs=0"])


def test_gradcheck_default_passes():
    results = gradcheck.run_all(trials=100)
    assert all(r.passed for r in results)
    assert results[0].trials == 100


def test_gradcheck_catches_sign_flip():
    def flipped(s, x):
        gw, gx = cap.length_gradient(s, x)
        return -gw, gx

    res = gradcheck.capsule_suite(trials=8, length_gradient=flipped)
    assert not res.passed
    assert res.worst_case[:2] in {(8, 1), (8, 2), (8, 4), (64, 1), (64, 2), (64, 4), (64, 8)}


def test_gradcheck_c1_cross_checks_weight_norm(monkeypatch):
    monkeypatch.setattr(cap, "weight_norm_length", lambda w, x: 0.0)
    assert not gradcheck.capsule_suite(dims=(8,), capsule_dims=(1,), trials=3).passed


def test_visualize_exports(tmp_path):
    cfg = TrainConfig(epochs=5, capsule_dim=2)
    rec = train(cfg)
    ds = build_data(cfg)
    summary = visualize.export_projections(rec.model, ds.x_test, ds.y_test, tmp_path)
    assert set(summary) == set(range(10))
    scores = rec.model.scores(ds.x_test)
    for l, (own, other) in summary.items():
        assert own > other
        with open(tmp_path / f"subspace_{l}.csv") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["x", "y", "is_own_class", "length"]
        assert len(rows) == len(ds.y_test)
        lengths = np.array([float(r["length"]) for r in rows])
        np.testing.assert_allclose(lengths, scores[:, l], rtol=1e-8)
        xy = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        np.testing.assert_allclose(np.linalg.norm(xy, axis=1), lengths, rtol=1e-12)
        assert (tmp_path / f"subspace_{l}.svg").read_text().startswith("<svg")


def test_visualize_pairs_and_errors(tmp_path):
    cfg = TrainConfig(**SMALL, capsule_dim=2)
    model = Model.build(cfg, 10, 3)
    ds = build_data(cfg)
    summary = visualize.export_projections(model, ds.x_test, ds.y_test, tmp_path, pairs=[(0, 2)])
    assert list(summary) == [0]
    with open(tmp_path / "subspace_0.csv") as f:
        n = sum(1 for _ in f) - 1
    assert n == int(((ds.y_test == 0) | (ds.y_test == 2)).sum())
    with pytest.raises(InputError):
        visualize.export_projections(model, ds.x_test[:0], ds.y_test[:0], tmp_path)
    m4 = Model.build(TrainConfig(**SMALL, capsule_dim=4), 10, 3)
    with pytest.raises(UnsupportedDimensionError):
        visualize.export_projections(m4, ds.x_test, ds.y_test, tmp_path)


def test_bench_sigma_tracking_and_fallbacks():
    rows = bench.bench_sigma(grid=((64, 1), (64, 4)), steps=200)
    assert [(r.dim, r.capsule_dim) for r in rows] == [(64, 1), (64, 4)]
    assert all(r.max_residual <= 1e-6 and r.eps_fallbacks == 0 for r in rows)
    assert all(r.exact_time > 0 and r.hyperpower_time > 0 for r in rows)
    adv = bench.bench_sigma(grid=((32, 3),), steps=20, adversarial=True)
    assert adv[0].eps_fallbacks == 21
