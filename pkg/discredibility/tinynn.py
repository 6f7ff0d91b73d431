"""
A small, deterministic dense-network engine.

The victim, the shadows, the Shokri attack model and the decoder used for
sample generation are all instances of :class:`DenseNet`. A classifier is
decomposed as ``Y(x) = softmax(l(E(x)))`` where ``E`` maps an input to the
activations of the last hidden layer and ``l`` is the final affine layer.

Only two objectives are differentiated: cross-entropy with respect to the
parameters (training) and the squared latent distance with respect to the
input (latent matching). Decoder training reuses the parameter backward pass
with a squared output error.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from discredibility import (
    ConfigError,
    DatasetFormatError,
    DivergenceError,
    ShapeError,
)

if TYPE_CHECKING:
    from discredibility.data import LabeledDataset

LOSS_FLOOR = 1e-12
TNN_MAGIC = b"TNN1"

Grads = Tuple[List[np.ndarray], List[np.ndarray]]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    decay_factor: float = 0.1
    decay_epochs: Tuple[int, ...] = (50, 75)
    epochs: int = 90
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if not self.learning_rate > 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        previous = -1
        for epoch in self.decay_epochs:
            if epoch <= previous or epoch >= self.epochs:
                raise ConfigError(
                    f"decay_epochs {list(self.decay_epochs)} must be strictly "
                    f"increasing and smaller than epochs={self.epochs}"
                )
            previous = epoch

    def learning_rate_at(self, epoch: int) -> float:
        n_decays = sum(1 for e in self.decay_epochs if e <= epoch)
        return self.learning_rate * self.decay_factor**n_decays


class DenseNet(object):
    """
    Fully connected rectifier network.

    Weights are stored as ``fan_in x fan_out`` matrices so a batch is
    propagated as ``a @ W + b``. All hidden layers use the rectifier, the final
    layer is affine. With ``output_clamp`` the final layer output is clipped to
    ``[0, 1]`` (decoders).
    """

    def __init__(
        self,
        weights: List[np.ndarray],
        biases: List[np.ndarray],
        output_clamp: bool = False,
    ):
        if len(weights) < 2:
            raise ShapeError("A DenseNet needs at least one hidden layer.")
        if len(weights) != len(biases):
            raise ShapeError("Number of weight matrices and bias vectors differ.")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"Layer {i} has inconsistent shapes {w.shape}, {b.shape}")
            if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"Layer {i} does not chain onto layer {i - 1}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.output_clamp = output_clamp

    @classmethod
    def initialize(
        cls,
        layer_dims: List[int],
        seed: int,
        output_clamp: bool = False,
        output_bias: float = 0.0,
    ) -> DenseNet:
        """
        Glorot-uniform initialisation, biases at zero.

        :param layer_dims: input dim, hidden widths..., output dim
        :param seed: seed of the initialisation stream
        :param output_bias: constant for the final bias, decoders start at 0.5
        """
        if len(layer_dims) < 3:
            raise ShapeError(f"layer_dims {layer_dims} has no hidden layer")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        biases[-1][:] = output_bias
        return cls(weights, biases, output_clamp=output_clamp)

    @property
    def layer_dims(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def latent_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> DenseNet:
        return DenseNet(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            output_clamp=self.output_clamp,
        )

    def n_parameters(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))


@dataclass
class TrainingLog:
    epochs: List[Dict[str, float]] = field(default_factory=list)

    @property
    def final(self) -> Dict[str, float]:
        return self.epochs[-1] if self.epochs else {}

    def to_dict(self) -> Dict:
        return {"epochs": {str(int(e["epoch"])): e for e in self.epochs}}


def _as_batch(batch: np.ndarray, input_dim: int) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != input_dim:
        raise ShapeError(
            f"Batch of shape {batch.shape} does not match input dim {input_dim}"
        )
    return batch


def _forward_cache(net: DenseNet, batch: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Returns pre-activations of every layer and the inputs to every layer."""
    inputs = [batch]
    pre_activations = []
    a = batch
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pre_activations.append(z)
        if i < len(net.weights) - 1:
            a = np.maximum(z, 0.0)
            inputs.append(a)
    return pre_activations, inputs


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=1, keepdims=True)


def forward(net: DenseNet, batch: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Run the network on a batch.

    :return: latent ``E(x)``, logits ``l(E(x))`` and row-wise softmax
        probabilities
    """
    batch = _as_batch(batch, net.input_dim)
    pre_activations, inputs = _forward_cache(net, batch)
    logits = pre_activations[-1]
    return inputs[-1], logits, softmax(logits)


def encode(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    return forward(net, batch)[0]


def predict(net: DenseNet, batch: np.ndarray) -> np.ndarray:
    return np.argmax(forward(net, batch)[1], axis=1)


def decode(net: DenseNet, latent: np.ndarray) -> np.ndarray:
    """Output of a decoder network, clamped when the net asks for it."""
    latent = _as_batch(latent, net.input_dim)
    out = _forward_cache(net, latent)[0][-1]
    return np.clip(out, 0.0, 1.0) if net.output_clamp else out


def accuracy(net: DenseNet, samples: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(predict(net, samples) == np.asarray(labels)))


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    Per-sample cross-entropy ``-log(p[y] + LOSS_FLOOR)``.

    >>> float(cross_entropy(np.array([[0.5, 0.25, 0.25]]), np.array([1]))[0])  # doctest: +ELLIPSIS
    1.386294361...
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels)).astype(np.int64)
    if labels.shape[0] != probs.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {probs.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ShapeError(
            f"Labels must be in [0, {probs.shape[1]}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(picked + LOSS_FLOOR)


def _backward(
    net: DenseNet,
    pre_activations: List[np.ndarray],
    inputs: List[np.ndarray],
    d_out: np.ndarray,
) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """Backpropagate a gradient w.r.t. the final layer output."""
    n_layers = len(net.weights)
    grad_w: List[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: List[np.ndarray] = [np.empty(0)] * n_layers
    delta = d_out
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        d_in = delta @ net.weights[i].T
        if i > 0:
            delta = d_in * (pre_activations[i - 1] > 0.0)
    return grad_w, grad_b, d_in


def param_gradients(
    net: DenseNet, batch: np.ndarray, labels: np.ndarray
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    """
    Mean cross-entropy over the batch and its gradients w.r.t. every weight
    matrix and bias vector.
    """
    batch = _as_batch(batch, net.input_dim)
    labels = np.asarray(labels).astype(np.int64)
    pre_activations, inputs = _forward_cache(net, batch)
    probs = softmax(pre_activations[-1])
    loss = float(np.mean(cross_entropy(probs, labels)))
    d_out = probs.copy()
    d_out[np.arange(len(labels)), labels] -= 1.0
    d_out /= len(labels)
    grad_w, grad_b, _ = _backward(net, pre_activations, inputs, d_out)
    return loss, grad_w, grad_b


def _reconstruction_gradients(
    net: DenseNet, batch: np.ndarray, targets: np.ndarray
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    # Straight-through: the clamp is ignored in the backward pass.
    pre_activations, inputs = _forward_cache(net, batch)
    residual = pre_activations[-1] - targets
    loss = float(np.mean(residual**2))
    d_out = 2.0 * residual / residual.size
    grad_w, grad_b, _ = _backward(net, pre_activations, inputs, d_out)
    return loss, grad_w, grad_b


def grad_wrt_input(
    net: DenseNet, x: np.ndarray, target_latent: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradient of ``||E(x) - z||^2 / dim(z)`` with respect to ``x``.

    Works on a single input vector or on a batch (one target per row).

    :return: gradient with the shape of ``x`` and the objective value(s)
    """
    single = np.ndim(x) == 1
    batch = _as_batch(x, net.input_dim)
    target = np.atleast_2d(np.asarray(target_latent, dtype=np.float64))
    if target.shape != (batch.shape[0], net.latent_dim):
        raise ShapeError(
            f"Target latent of shape {target.shape} does not match "
            f"({batch.shape[0]}, {net.latent_dim})"
        )
    pre_activations, inputs = _forward_cache(net, batch)
    latent = inputs[-1]
    diff = latent - target
    objective = np.sum(diff**2, axis=1) / net.latent_dim

    delta = (2.0 / net.latent_dim) * diff * (pre_activations[-2] > 0.0)
    for i in range(len(net.weights) - 2, -1, -1):
        d_in = delta @ net.weights[i].T
        if i > 0:
            delta = d_in * (pre_activations[i - 1] > 0.0)
    if not (np.all(np.isfinite(d_in)) and np.all(np.isfinite(objective))):
        raise DivergenceError("Non-finite value in input gradient.")
    if single:
        return d_in[0], objective
    return d_in, objective


def _epoch_stream(seed: int, epoch: int) -> np.random.Generator:
    # Counter-based stream; the epoch lives in the upper counter words.
    return np.random.Generator(np.random.Philox(key=seed, counter=epoch << 128))


def _run_sgd(
    net: DenseNet,
    inputs: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    step: Callable[[DenseNet, np.ndarray, np.ndarray], Tuple[float, List[np.ndarray], List[np.ndarray]]],
    on_epoch: Callable[[int, float, float], None],
) -> DenseNet:
    n = inputs.shape[0]
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate_at(epoch)
        order = _epoch_stream(cfg.seed, epoch).permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad_w, grad_b = step(net, inputs[idx], targets[idx])
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"Non-finite loss at epoch {epoch}, batch starting at {start} "
                    f"(learning rate {lr})."
                )
            for w, b, gw, gb in zip(net.weights, net.biases, grad_w, grad_b):
                w -= lr * gw
                b -= lr * gb
            losses.append(loss * len(idx))
        on_epoch(epoch, lr, float(np.sum(losses) / n))
    return net


def train_sgd(
    net: DenseNet,
    data: LabeledDataset,
    cfg: TrainConfig,
    test_data: Optional[LabeledDataset] = None,
) -> Tuple[DenseNet, TrainingLog]:
    """
    Mini-batch SGD on the cross-entropy with a step decay schedule.

    The input network is not modified; a trained copy is returned together with
    the per-epoch loss and train/test accuracy.
    """
    if len(data) == 0:
        raise ShapeError("Cannot train on an empty dataset.")
    net = net.copy()
    log = TrainingLog()

    def on_epoch(epoch: int, lr: float, loss: float) -> None:
        entry = {
            "epoch": epoch,
            "learning_rate": lr,
            "loss": loss,
            "train_accuracy": accuracy(net, data.samples, data.labels),
        }
        if test_data is not None and len(test_data):
            entry["test_accuracy"] = accuracy(net, test_data.samples, test_data.labels)
        log.epochs.append(entry)

    _run_sgd(net, data.samples, data.labels, cfg, param_gradients, on_epoch)
    return net, log


def train_reconstruction(
    net: DenseNet, inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig
) -> Tuple[DenseNet, List[float]]:
    """
    Mini-batch SGD on the mean squared output error, as used for decoders.

    :return: trained copy and per-epoch mean squared error of the (clamped)
        outputs
    """
    inputs = _as_batch(inputs, net.input_dim)
    targets = np.asarray(targets, dtype=np.float64)
    net = net.copy()
    history: List[float] = []

    def on_epoch(epoch: int, lr: float, loss: float) -> None:
        history.append(float(np.mean((decode(net, inputs) - targets) ** 2)))

    _run_sgd(net, inputs, targets, cfg, _reconstruction_gradients, on_epoch)
    return net, history


def save_net(net: DenseNet, filename: Union[str, Path]) -> None:
    dims = net.layer_dims
    with open(filename, "wb") as fh:
        fh.write(TNN_MAGIC)
        fh.write(struct.pack("<I", len(net.weights)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_net(filename: Union[str, Path], output_clamp: bool = False) -> DenseNet:
    with open(filename, "rb") as fh:
        raw = fh.read()
    if raw[:4] != TNN_MAGIC:
        raise DatasetFormatError(f"{filename} is not a TNN1 file.")
    if len(raw) < 8:
        raise DatasetFormatError(f"{filename} is truncated.")
    (n_layers,) = struct.unpack_from("<I", raw, 4)
    offset = 8
    if len(raw) < offset + 4 * (n_layers + 1):
        raise DatasetFormatError(f"{filename} is truncated.")
    dims = struct.unpack_from(f"<{n_layers + 1}I", raw, offset)
    offset += 4 * (n_layers + 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        n_bytes = 8 * (fan_in * fan_out + fan_out)
        if len(raw) < offset + n_bytes:
            raise DatasetFormatError(f"{filename} is truncated.")
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(raw):
        raise DatasetFormatError(f"{filename} has {len(raw) - offset} trailing bytes.")
    return DenseNet(weights, biases, output_clamp=output_clamp)
