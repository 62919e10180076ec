import math

import numpy as np
import pytest

from helpers import gradient_check, tiny_problem, tiny_spec
from ts2img.classifier import (
    Adam,
    NetworkSpec,
    TrainConfig,
    evaluate,
    forward,
    init_network,
    load_checkpoint,
    loss_and_grad,
    predict,
    save_checkpoint,
    train,
    zero_network,
)
from ts2img.dataset import LabeledImageSet
from ts2img.errors import ConfigError, DataError, EmptyDataset, ShapeMismatch


def toy_set(n_per_class=6, edge=8, seed=0):
    """Three trivially separable classes: bright left, bright right, dark."""
    rng = np.random.default_rng(seed)
    images, labels, manifest = [], [], []
    for c, name in enumerate("abc"):
        for k in range(n_per_class):
            img = rng.integers(0, 40, (edge, edge)).astype(np.uint8)
            if c == 0:
                img[:, :edge // 2] += 200
            elif c == 1:
                img[:, edge // 2:] += 200
            images.append(img)
            labels.append(name)
            manifest.append({"source_id": name, "window_start": k, "source_range": [k, k]})
    return LabeledImageSet(np.stack(images), labels, manifest)


def test_spec_validation():
    with pytest.raises(ConfigError):
        NetworkSpec([{"type": "dense", "out_features": 3}, {"type": "softmax"}], input_edge=8)
    with pytest.raises(ConfigError):
        NetworkSpec([{"type": "flatten"}, {"type": "dense", "out_features": 2}, {"type": "softmax"}],
                    input_edge=8, num_classes=3)
    with pytest.raises(ConfigError):
        NetworkSpec([{"type": "conv", "out_channels": 2, "kernel": 9}, {"type": "flatten"},
                     {"type": "dense", "out_features": 3}, {"type": "softmax"}], input_edge=8)
    with pytest.raises(ConfigError):
        NetworkSpec([{"type": "pool"}], input_edge=8)
    assert NetworkSpec().shapes()[-1] == (3,)


def test_zero_network_is_uniform():
    net = zero_network(NetworkSpec())
    p = forward(net, np.random.default_rng(0).random((4, 64, 64)))
    np.testing.assert_allclose(p, 1 / 3, atol=1e-12)
    loss, _ = loss_and_grad(net, np.zeros((3, 1, 64, 64)), [0, 1, 2])
    assert loss == pytest.approx(math.log(3), abs=1e-12)


def test_initial_loss_near_log3():
    rng = np.random.default_rng(1)
    net = init_network(NetworkSpec(), rng_seed=1)
    loss, _ = loss_and_grad(net, rng.random((16, 1, 64, 64)), rng.integers(0, 3, 16))
    assert 0.9 <= loss <= 1.3


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_matches_finite_differences(seed):
    net, x, y = tiny_problem(seed)
    assert gradient_check(net, x, y) <= 1e-4


def test_gradient_check_with_stride():
    spec = NetworkSpec([
        {"type": "conv", "out_channels": 2, "kernel": 3, "stride": 2},
        {"type": "relu"},
        {"type": "conv", "out_channels": 2, "kernel": 2, "stride": 1},
        {"type": "flatten"},
        {"type": "dense", "out_features": 4},
        {"type": "relu"},
        {"type": "dense", "out_features": 3},
        {"type": "softmax"},
    ], input_edge=9)
    rng = np.random.default_rng(5)
    net = init_network(spec, rng_seed=5)
    assert gradient_check(net, rng.random((4, 1, 9, 9)), rng.integers(0, 3, 4)) <= 1e-4


def test_shape_errors():
    net, x, y = tiny_problem()
    with pytest.raises(ShapeMismatch):
        forward(net, np.zeros((2, 1, 9, 9)))
    with pytest.raises(ShapeMismatch):
        loss_and_grad(net, x, y[:-1])
    with pytest.raises(ShapeMismatch):
        loss_and_grad(net, x, np.full(len(y), 3))


def test_zero_learning_rate_leaves_weights():
    ds = toy_set()
    net = init_network(tiny_spec(), rng_seed=2, classes=["a", "b", "c"])
    cfg = TrainConfig(epochs=2, batch_size=4, learning_rate=0.0, optimizer="sgd", dtype="float64")
    out, _ = train(net, ds, cfg)
    for k in net.params:
        np.testing.assert_array_equal(out.params[k], net.params[k])


def test_overfits_two_images():
    ds = toy_set().subset([0, 6])
    net = init_network(tiny_spec(), rng_seed=0, classes=["a", "b", "c"])
    _, hist = train(net, ds, TrainConfig(epochs=50, batch_size=2, learning_rate=0.05))
    assert any(row["accuracy"] == 1.0 for row in hist)
    assert hist[-1]["loss"] < 0.1


def test_loss_decreases_early():
    ds = toy_set(10)
    net = init_network(tiny_spec(), rng_seed=3, classes=["a", "b", "c"])
    _, hist = train(net, ds, TrainConfig(epochs=5, batch_size=6, learning_rate=0.02))
    assert hist[4]["loss"] < hist[0]["loss"]


def test_training_is_deterministic():
    ds = toy_set(8)
    net = init_network(tiny_spec(), rng_seed=4, classes=["a", "b", "c"])
    cfg = TrainConfig(epochs=3, batch_size=5, learning_rate=0.01, random_erase=True)
    a, ha = train(net, ds, cfg, eval_set=ds)
    b, hb = train(net, ds, cfg, eval_set=ds)
    assert ha == hb
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])
    assert {"eval_accuracy", "precision", "recall", "macro_f1"} <= set(ha[0])


def test_validation_returns_best_snapshot():
    ds = toy_set(20)
    net = init_network(tiny_spec(), rng_seed=0, classes=["a", "b", "c"])
    out, hist = train(net, ds, TrainConfig(epochs=6, batch_size=8, learning_rate=0.02, validation_fraction=0.25))
    assert all("val_accuracy" in row for row in hist)
    assert evaluate(out, ds)["accuracy"] >= 0.0


def test_train_errors():
    net = init_network(tiny_spec(), classes=["a", "b", "c"])
    with pytest.raises(EmptyDataset):
        train(net, toy_set().subset([]), TrainConfig(epochs=1))
    bad = toy_set()
    bad.labels[0] = "zzz"
    with pytest.raises(DataError):
        train(net, bad, TrainConfig(epochs=1))
    for kwargs in ({"epochs": 0}, {"batch_size": 0}, {"optimizer": "rmsprop"}, {"dtype": "float16"},
                   {"learning_rate": -1.0}, {"validation_fraction": 1.0}):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


def test_predict_ties_go_to_lowest_index():
    net = zero_network(tiny_spec())
    assert predict(net, np.zeros((3, 8, 8), dtype=np.uint8)).tolist() == [0, 0, 0]


def test_adam_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -2.0])}
    Adam(0.1).step(params, {"w": np.array([3.0, -0.5])})
    np.testing.assert_allclose(params["w"], [0.9, -1.9], atol=1e-6)


def test_checkpoint_round_trip(tmp_path):
    net = init_network(NetworkSpec(), rng_seed=7, classes=["x", "y", "z"])
    path = tmp_path / "model.bin"
    save_checkpoint(path, net)
    raw = path.read_bytes()
    assert raw[:8] == b"TS2IMGNN"
    back = load_checkpoint(path)
    assert back.classes == ["x", "y", "z"]
    assert back.spec.to_dict() == net.spec.to_dict()
    for k, v in net.params.items():
        np.testing.assert_array_equal(back.params[k], v.astype(np.float32))
    save_checkpoint(tmp_path / "again.bin", back)
    assert (tmp_path / "again.bin").read_bytes() == raw
    (tmp_path / "bad.bin").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "bad.bin")
    (tmp_path / "trunc.bin").write_bytes(raw + b"\0")
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "trunc.bin")
