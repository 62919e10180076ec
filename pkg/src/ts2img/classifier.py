"""A small convolutional network in numpy with hand-written backward passes.

Layer vocabulary: ``conv``, ``relu``, ``maxpool``, ``flatten``, ``dense`` and
a terminal ``softmax``. Convolution and pooling go through ``ts2img.kernels``
(numba or numpy, see ``TS2IMG_BACKEND``). Gradients are checked against
central finite differences in the test suite.
"""
from __future__ import annotations

import copy
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .augment import AugmentConfig, erase_rectangle
from .errors import ConfigError, DataError, EmptyDataset, ShapeMismatch
from .metrics import confusion, scores

log = logging.getLogger(__name__)

LAYER_TYPES = ("conv", "relu", "maxpool", "flatten", "dense", "softmax")


def default_layers(num_classes=3):
    return [
        {"type": "conv", "out_channels": 8, "kernel": 3, "stride": 1},
        {"type": "relu"},
        {"type": "maxpool", "kernel": 2},
        {"type": "conv", "out_channels": 16, "kernel": 3, "stride": 1},
        {"type": "relu"},
        {"type": "maxpool", "kernel": 2},
        {"type": "flatten"},
        {"type": "dense", "out_features": 32},
        {"type": "relu"},
        {"type": "dense", "out_features": num_classes},
        {"type": "softmax"},
    ]


@dataclass
class NetworkSpec:
    layers: list = field(default_factory=default_layers)
    input_edge: int = 64
    num_classes: int = 3
    in_channels: int = 1

    def __post_init__(self):
        self.layers = [dict(layer) for layer in self.layers]
        self.shapes()

    def shapes(self):
        """Activation shape after every layer (batch axis omitted)."""
        shape = (self.in_channels, self.input_edge, self.input_edge)
        out = []
        for i, layer in enumerate(self.layers):
            kind = layer.get("type")
            if kind not in LAYER_TYPES:
                raise ConfigError(f"layer {i}: unknown type {kind!r}")
            if kind == "conv":
                if len(shape) != 3:
                    raise ConfigError(f"layer {i}: conv needs a (C, H, W) input, got {shape}")
                k, s = int(layer["kernel"]), int(layer.get("stride", 1))
                ho = (shape[1] - k) // s + 1
                wo = (shape[2] - k) // s + 1
                if ho < 1 or wo < 1:
                    raise ConfigError(f"layer {i}: kernel {k} larger than input {shape}")
                shape = (int(layer["out_channels"]), ho, wo)
            elif kind == "maxpool":
                k = int(layer["kernel"])
                if len(shape) != 3 or shape[1] < k or shape[2] < k:
                    raise ConfigError(f"layer {i}: cannot pool {shape} with kernel {k}")
                shape = (shape[0], shape[1] // k, shape[2] // k)
            elif kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif kind == "dense":
                if len(shape) != 1:
                    raise ConfigError(f"layer {i}: dense needs a flat input, got {shape}")
                shape = (int(layer["out_features"]),)
            elif kind == "softmax" and i != len(self.layers) - 1:
                raise ConfigError("softmax must be the last layer")
            out.append(shape)
        if not out or self.layers[-1]["type"] != "softmax":
            raise ConfigError("network must end with softmax")
        if out[-1] != (self.num_classes,):
            raise ConfigError(f"network outputs {out[-1]}, expected ({self.num_classes},)")
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("layers", "input_edge", "num_classes", "in_channels") if k in d})


class Network:
    """Spec, named parameters and the class names the outputs refer to."""

    def __init__(self, spec, params, classes=None):
        self.spec = spec
        self.params = params
        self.classes = list(classes) if classes is not None else [str(i) for i in range(spec.num_classes)]

    def copy(self):
        return Network(copy.deepcopy(self.spec), {k: v.copy() for k, v in self.params.items()}, self.classes)

    def param_shapes(self):
        return {k: v.shape for k, v in self.params.items()}


HEAD_GAIN = 0.1


def init_network(spec, rng_seed=0, classes=None, dtype=np.float64):
    """He-style uniform weights ``U(-sqrt(6/fan_in), +sqrt(6/fan_in))``, zero biases.

    The dense layer feeding the softmax is shrunk by ``HEAD_GAIN`` so a fresh
    network starts close to uniform class probabilities.
    """
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    params = {}
    shape = (spec.in_channels, spec.input_edge, spec.input_edge)
    for i, (layer, out_shape) in enumerate(zip(spec.layers, spec.shapes())):
        if layer["type"] == "conv":
            k = int(layer["kernel"])
            fan_in = shape[0] * k * k
            limit = math.sqrt(6.0 / fan_in)
            params[f"{i}.W"] = rng.uniform(-limit, limit, (out_shape[0], shape[0], k, k)).astype(dtype)
            params[f"{i}.b"] = np.zeros(out_shape[0], dtype=dtype)
        elif layer["type"] == "dense":
            limit = math.sqrt(6.0 / shape[0])
            if spec.layers[i + 1:] == [{"type": "softmax"}]:
                limit *= HEAD_GAIN
            params[f"{i}.W"] = rng.uniform(-limit, limit, (shape[0], out_shape[0])).astype(dtype)
            params[f"{i}.b"] = np.zeros(out_shape[0], dtype=dtype)
        shape = out_shape
    return Network(spec, params, classes)


def zero_network(spec, classes=None):
    net = init_network(spec, 0, classes)
    for v in net.params.values():
        v[...] = 0.0
    return net


# --------------------------------------------------------------------------
# forward / backward


def _check_batch(net, x):
    x = np.asarray(x)
    spec = net.spec
    if x.ndim == 3:
        x = x[:, None, :, :]
    want = (spec.in_channels, spec.input_edge, spec.input_edge)
    if x.ndim != 4 or x.shape[1:] != want:
        raise ShapeMismatch(f"batch shape {x.shape} does not match (N,) + {want}")
    dtype = next(iter(net.params.values())).dtype if net.params else np.float64
    return x.astype(dtype, copy=False)


def _forward(net, x):
    """Logits plus the per-layer caches the backward pass needs."""
    caches = []
    a = x
    for i, layer in enumerate(net.spec.layers):
        kind = layer["type"]
        if kind == "conv":
            w, b = net.params[f"{i}.W"], net.params[f"{i}.b"]
            stride = int(layer.get("stride", 1))
            caches.append(a)
            a = kernels.conv2d_forward(np.ascontiguousarray(a), w, b, stride)
        elif kind == "relu":
            caches.append(a > 0)
            a = a * caches[-1]
        elif kind == "maxpool":
            k = int(layer["kernel"])
            out, arg = kernels.maxpool_forward(np.ascontiguousarray(a), k)
            caches.append((arg, a.shape))
            a = out
        elif kind == "flatten":
            caches.append(a.shape)
            a = a.reshape(a.shape[0], -1)
        elif kind == "dense":
            caches.append(a)
            a = a @ net.params[f"{i}.W"] + net.params[f"{i}.b"]
        else:  # softmax is applied by the callers
            caches.append(None)
    return a, caches


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(net, batch):
    """Class probabilities, shape ``(N, num_classes)``; input pixels scaled to [0, 1]."""
    logits, _ = _forward(net, _check_batch(net, batch))
    return _softmax(logits)


def loss_and_grad(net, batch, labels):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    loss, grads, _ = _loss_grad_logits(net, batch, labels)
    return loss, grads


def _loss_grad_logits(net, batch, labels):
    x = _check_batch(net, batch)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (x.shape[0],):
        raise ShapeMismatch(f"{x.shape[0]} inputs but labels have shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= net.spec.num_classes):
        raise ShapeMismatch("label index outside [0, num_classes)")
    n = x.shape[0]
    logits, caches = _forward(net, x)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_p = z[np.arange(n), labels] - log_norm
    loss = float(-log_p.mean())

    d = np.exp(z - log_norm[:, None])
    d[np.arange(n), labels] -= 1.0
    d /= n
    grads = {}
    for i in range(len(net.spec.layers) - 1, -1, -1):
        layer = net.spec.layers[i]
        kind = layer["type"]
        cache = caches[i]
        if kind == "dense":
            grads[f"{i}.W"] = cache.T @ d
            grads[f"{i}.b"] = d.sum(axis=0)
            d = d @ net.params[f"{i}.W"].T
        elif kind == "flatten":
            d = d.reshape(cache)
        elif kind == "maxpool":
            arg, shape = cache
            d = kernels.maxpool_backward(np.ascontiguousarray(d), arg, shape, int(layer["kernel"]))
        elif kind == "relu":
            d = d * cache
        elif kind == "conv":
            # the gradient w.r.t. the input image is never used
            dx, dw, db = kernels.conv2d_backward(np.ascontiguousarray(d), np.ascontiguousarray(cache),
                                                 net.params[f"{i}.W"], int(layer.get("stride", 1)), i > 0)
            grads[f"{i}.W"] = dw
            grads[f"{i}.b"] = db
            d = dx
    return loss, grads, logits


def predict_proba(net, images, batch_size=256):
    x = _scaled(images)
    out = [forward(net, x[s:s + batch_size]) for s in range(0, x.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros((0, net.spec.num_classes))


def predict(net, images, batch_size=256):
    """Argmax class index per image; ties go to the lowest index."""
    return np.argmax(predict_proba(net, images, batch_size), axis=1)


def _scaled(images):
    x = np.asarray(images)
    if x.dtype == np.uint8:
        x = x.astype(np.float64) / 255.0
    if x.ndim == 3:
        x = x[:, None]
    return x


# --------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, learning_rate):
        self.lr = learning_rate

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


class Adam:
    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = learning_rate, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in sorted(grads):
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rng_seed: int = 0
    loss: str = "cross_entropy"
    validation_fraction: float = 0.0
    random_erase: bool = False
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    dtype: str = "float32"

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig.from_dict(self.augment)
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.loss != "cross_entropy":
            raise ConfigError("only cross_entropy loss is supported")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be 'float32' or 'float64', got {self.dtype!r}")

    def make_optimizer(self):
        if self.optimizer == "sgd":
            return SGD(self.learning_rate)
        return Adam(self.learning_rate, self.beta1, self.beta2, self.eps)

    def to_dict(self):
        d = asdict(self)
        d["augment"] = self.augment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in names})


def _label_indices(labels, classes):
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[lab] for lab in labels], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} not among network classes {classes}") from None


def _erase_batch(images, config, seed, epoch, order):
    out = images.copy()
    edge = images.shape[-1]
    for row, idx in enumerate(order):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch, int(idx)])))
        rect = erase_rectangle(edge, config, rng)
        if rect is not None:
            top, left, h, w = rect
            out[row, top:top + h, left:left + w] = 0
    return out


def evaluate(net, dataset):
    """Report dict with accuracy, macro precision/recall/F1, per-class scores and confusion."""
    y = _label_indices(dataset.labels, net.classes)
    pred = predict(net, dataset.images)
    return scores(confusion(y, pred, len(net.classes))).as_report(net.classes)


def train(net, train_set, config, eval_set=None, progress=None):
    """Mini-batch training; returns ``(net, history)``.

    ``history`` has one dict per epoch with the mean training ``loss`` and
    ``accuracy``. If ``eval_set`` is given, its accuracy and macro scores
    are recorded each epoch (monitoring only; it never selects weights). With
    ``validation_fraction`` > 0 a block-split validation part is held out of
    ``train_set`` and the epoch with the best validation accuracy is returned.
    """
    from .dataset import split as block_split

    if len(train_set) == 0:
        raise EmptyDataset("training set is empty")
    net = net.copy()
    net.params = {k: v.astype(config.dtype) for k, v in net.params.items()}
    val_set = None
    if config.validation_fraction > 0:
        train_set, val_set = block_split(train_set, config.validation_fraction, config.rng_seed)
        if len(train_set) == 0:
            raise EmptyDataset("nothing left to train on after the validation split")
    y = _label_indices(train_set.labels, net.classes)
    images = train_set.images
    n = len(y)
    opt = config.make_optimizer()
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    history = []
    best = (-1.0, None)
    dtype = next(iter(net.params.values())).dtype
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            batch = images[idx]
            if config.random_erase:
                batch = _erase_batch(batch, config.augment, config.rng_seed, epoch, idx)
            x = (batch.astype(dtype) / 255.0)[:, None]
            loss, grads, logits = _loss_grad_logits(net, x, y[idx])
            loss_sum += loss * len(idx)
            correct += int((np.argmax(logits, axis=1) == y[idx]).sum())
            opt.step(net.params, grads)
        # running figures over the epoch, as seen by the optimizer
        row = {"epoch": epoch + 1, "loss": loss_sum / n, "accuracy": correct / n}
        if val_set is not None and len(val_set):
            rep = evaluate(net, val_set)
            row["val_accuracy"] = rep["accuracy"]
            if rep["accuracy"] > best[0]:
                best = (rep["accuracy"], net.copy())
        if eval_set is not None and len(eval_set):
            rep = evaluate(net, eval_set)
            row["eval_accuracy"] = rep["accuracy"]
            row["precision"] = rep["precision"]
            row["recall"] = rep["recall"]
            row["macro_f1"] = rep["macro_f1"]
        history.append(row)
        if progress:
            progress(row)
    if best[1] is not None:
        return best[1], history
    return net, history


# --------------------------------------------------------------------------
# checkpoints

MAGIC = b"TS2IMGNN"
VERSION = 1


def save_checkpoint(path, net):
    """Magic, u16 version, u32 header length, JSON header, little-endian float32 blob."""
    names = sorted(net.params)
    header = json.dumps({
        "spec": net.spec.to_dict(),
        "classes": net.classes,
        "params": [[k, list(net.params[k].shape)] for k in names],
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(header)))
        fh.write(header)
        for k in names:
            fh.write(np.ascontiguousarray(net.params[k], dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float64):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a ts2img checkpoint")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<HI", data, off)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    off += struct.calcsize("<HI")
    header = json.loads(data[off:off + hlen])
    off += hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        params[name] = arr.astype(dtype)
        off += 4 * count
    if off != len(data):
        raise DataError(f"{path}: {len(data) - off} trailing bytes")
    return Network(NetworkSpec.from_dict(header["spec"]), params, header["classes"])
