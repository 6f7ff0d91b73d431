import numpy as np
import pytest

from discredibility import ConfigError, DatasetFormatError, ShapeError
from discredibility.data import LabeledDataset
from discredibility.tinynn import (
    DenseNet,
    TrainConfig,
    accuracy,
    cross_entropy,
    decode,
    encode,
    forward,
    grad_wrt_input,
    load_net,
    param_gradients,
    predict,
    save_net,
    train_sgd,
)
from tests.conftest import quick_train_config

STEP = 1e-5


def _random_problem(seed: int):
    rng = np.random.default_rng(seed)
    net = DenseNet.initialize([5, 7, 6, 3], seed=seed)
    for b in net.biases:
        b[:] = rng.normal(0.0, 0.1, size=b.shape)
    batch = rng.uniform(0.0, 1.0, size=(4, 5))
    labels = rng.integers(0, 3, size=4)
    return net, batch, labels


@pytest.mark.parametrize("seed", range(5))
def test_param_gradients_match_central_differences(seed):
    net, batch, labels = _random_problem(seed)
    _, grad_w, grad_b = param_gradients(net, batch, labels)
    rng = np.random.default_rng(100 + seed)
    for _ in range(20):
        layer = rng.integers(len(net.weights))
        use_bias = bool(rng.integers(2))
        params = net.biases[layer] if use_bias else net.weights[layer]
        analytic = grad_b[layer] if use_bias else grad_w[layer]
        index = tuple(rng.integers(s) for s in params.shape)
        original = params[index]
        params[index] = original + STEP
        up = param_gradients(net, batch, labels)[0]
        params[index] = original - STEP
        down = param_gradients(net, batch, labels)[0]
        params[index] = original
        numeric = (up - down) / (2 * STEP)
        np.testing.assert_allclose(analytic[index], numeric, rtol=1e-4, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_input_gradient_matches_central_differences(seed):
    net, batch, _ = _random_problem(seed)
    x = batch[0]
    target = np.random.default_rng(seed).uniform(0.0, 1.0, size=net.latent_dim)
    grad, objective = grad_wrt_input(net, x, target)
    assert grad.shape == x.shape
    for i in range(len(x)):
        shifted = x.copy()
        shifted[i] += STEP
        up = grad_wrt_input(net, shifted, target)[1][0]
        shifted[i] -= 2 * STEP
        down = grad_wrt_input(net, shifted, target)[1][0]
        np.testing.assert_allclose(grad[i], (up - down) / (2 * STEP), rtol=1e-4, atol=1e-8)
    latent = encode(net, x)[0]
    np.testing.assert_allclose(objective[0], np.mean((latent - target) ** 2))


def test_forward_shapes_and_probabilities():
    net = DenseNet.initialize([3, 4, 2], seed=0)
    latent, logits, probs = forward(net, np.full((5, 3), 0.5))
    assert latent.shape == (5, 4)
    assert logits.shape == (5, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    with pytest.raises(ShapeError):
        forward(net, np.zeros((2, 4)))


def test_training_is_deterministic_and_leaves_input_untouched(tiny_data):
    net = DenseNet.initialize([tiny_data.dim, 8, tiny_data.n_classes], seed=1)
    before = [w.copy() for w in net.weights]
    first, log = train_sgd(net, tiny_data, quick_train_config(epochs=5))
    second, _ = train_sgd(net, tiny_data, quick_train_config(epochs=5))
    for w, w0 in zip(net.weights, before):
        np.testing.assert_array_equal(w, w0)
    for a, b in zip(first.weights, second.weights):
        np.testing.assert_array_equal(a, b)
    assert len(log.epochs) == 5
    assert log.epochs[-1]["loss"] < log.epochs[0]["loss"]


def test_learning_rate_schedule():
    cfg = TrainConfig(learning_rate=1.0, decay_factor=0.1, decay_epochs=(2, 4), epochs=6)
    assert [round(cfg.learning_rate_at(e), 12) for e in range(6)] == [1.0, 1.0, 0.1, 0.1, 0.01, 0.01]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"learning_rate": 0.0},
        {"decay_factor": 1.5},
        {"decay_epochs": (5, 3), "epochs": 10},
        {"decay_epochs": (10,), "epochs": 10},
        {"batch_size": 0},
    ],
)
def test_invalid_train_config(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ShapeError):
        cross_entropy(np.array([[0.5, 0.5]]), np.array([2]))


def test_cross_entropy_values():
    loss = cross_entropy(np.array([[0.5, 0.25, 0.25]]), np.array([1]))[0]
    assert float(loss) == pytest.approx(np.log(4.0), abs=1e-9)
    for n_classes in (2, 3, 10, 100):
        probs = np.full((n_classes, n_classes), 1.0 / n_classes)
        losses = cross_entropy(probs, np.arange(n_classes))
        np.testing.assert_allclose(losses, np.log(n_classes), atol=1e-9)


def test_two_separable_points_are_learned():
    data = LabeledDataset(
        samples=np.array([[0.9, 0.1], [0.1, 0.9]]),
        labels=np.array([0, 1]),
        subpop_ids=np.array([0, 1]),
        sample_ids=np.array([0, 1]),
        n_classes=2,
    )
    net = DenseNet.initialize([2, 16, 2], seed=0)
    cfg = TrainConfig(learning_rate=0.1, decay_factor=1.0, decay_epochs=(), epochs=200, batch_size=2)
    trained, log = train_sgd(net, data, cfg)
    assert accuracy(trained, data.samples, data.labels) == 1.0
    assert log.epochs[-1]["loss"] < log.epochs[0]["loss"]


def test_decode_clamps_for_decoders():
    net = DenseNet.initialize([2, 3, 4], seed=0, output_clamp=True, output_bias=5.0)
    out = decode(net, np.zeros((1, 2)))
    np.testing.assert_array_equal(out, np.ones((1, 4)))


def test_save_and_load(tmp_path):
    net = DenseNet.initialize([3, 5, 2], seed=2)
    filename = tmp_path / "net.tnn"
    save_net(net, filename)
    loaded = load_net(filename)
    assert loaded.layer_dims == [3, 5, 2]
    x = np.random.default_rng(0).uniform(size=(4, 3))
    np.testing.assert_array_equal(predict(loaded, x), predict(net, x))
    for a, b in zip(loaded.weights, net.weights):
        np.testing.assert_array_equal(a, b)


def test_load_rejects_foreign_and_truncated_files(tmp_path):
    bad = tmp_path / "bad.tnn"
    bad.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(DatasetFormatError):
        load_net(bad)
    good = tmp_path / "good.tnn"
    save_net(DenseNet.initialize([3, 5, 2], seed=2), good)
    truncated = tmp_path / "short.tnn"
    truncated.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(DatasetFormatError):
        load_net(truncated)
