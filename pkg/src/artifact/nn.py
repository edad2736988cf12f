"""Small numpy neural-network engine.

Tensors are plain ``numpy.ndarray`` objects (float64 by default, row-major).
Images are batched channels-last: ``(B, H, W, C)``. An ``Affine`` layer
flattens whatever it receives to ``(B, -1)`` so an MLP can consume images
directly.

Softmax is never stored as a layer. ``forward`` returns logits and the loss
and probability helpers apply softmax themselves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import LabelError, ShapeError

DTYPE = np.float64


@dataclass
class Affine:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=DTYPE)
        self.bias = np.asarray(self.bias, dtype=DTYPE)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"affine weight {self.weight.shape} and bias {self.bias.shape} do not match"
            )

    kind = "affine"

    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        n_in = math.prod(in_shape)
        if n_in != self.weight.shape[1]:
            raise ShapeError(f"affine expects {self.weight.shape[1]} inputs, got {in_shape}")
        return (self.weight.shape[0],)

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        return flat @ self.weight.T + self.bias, (x.shape, flat)

    def backward(self, dy, cache, need_input, need_params=True):
        in_shape, flat = cache
        grads = {"weight": dy.T @ flat, "bias": dy.sum(axis=0)} if need_params else {}
        dx = (dy @ self.weight).reshape(in_shape) if need_input else None
        return dx, grads


@dataclass
class Conv2D:
    kernels: np.ndarray  # (kh, kw, c_in, c_out)
    bias: np.ndarray  # (c_out,)
    stride: int = 1
    padding: int = 0

    kind = "conv2d"

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=DTYPE)
        self.bias = np.asarray(self.bias, dtype=DTYPE)
        if self.kernels.ndim != 4 or self.bias.shape != (self.kernels.shape[3],):
            raise ShapeError(
                f"conv kernels {self.kernels.shape} and bias {self.bias.shape} do not match"
            )
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("conv stride must be >= 1 and padding >= 0")

    def params(self) -> dict[str, np.ndarray]:
        return {"kernels": self.kernels, "bias": self.bias}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        kh, kw, cin, cout = self.kernels.shape
        if len(in_shape) != 3 or in_shape[2] != cin:
            raise ShapeError(f"conv expects (H, W, {cin}) input, got {in_shape}")
        ho = (in_shape[0] + 2 * self.padding - kh) // self.stride + 1
        wo = (in_shape[1] + 2 * self.padding - kw) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv output would be empty for input {in_shape}")
        return (ho, wo, cout)

    def _cols(self, x):
        kh, kw, cin, _ = self.kernels.shape
        p, s = self.padding, self.stride
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s]
        # win: (B, Ho, Wo, C, kh, kw) -> rows ordered (kh, kw, C) to match kernels
        b, ho, wo = win.shape[:3]
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, kh * kw * cin)
        return cols, xp.shape, (b, ho, wo)

    def forward(self, x):
        cols, padded_shape, (b, ho, wo) = self._cols(x)
        k2 = self.kernels.reshape(-1, self.kernels.shape[3])
        out = (cols @ k2 + self.bias).reshape(b, ho, wo, -1)
        return out, (x.shape, padded_shape, cols)

    def backward(self, dy, cache, need_input, need_params=True):
        in_shape, padded_shape, cols = cache
        kh, kw, cin, cout = self.kernels.shape
        dy2 = dy.reshape(-1, cout)
        grads = {}
        if need_params:
            grads = {
                "kernels": (cols.T @ dy2).reshape(self.kernels.shape),
                "bias": dy2.sum(axis=0),
            }
        if not need_input:
            return None, grads
        b, ho, wo = dy.shape[:3]
        dcols = (dy2 @ self.kernels.reshape(-1, cout).T).reshape(b, ho, wo, kh, kw, cin)
        dxp = np.zeros(padded_shape, dtype=dy.dtype)
        s = self.stride
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s, :] += dcols[
                    :, :, :, i, j, :
                ]
        p = self.padding
        dx = dxp[:, p : p + in_shape[1], p : p + in_shape[2], :] if p else dxp
        return dx, grads


class ReLU:
    kind = "relu"

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, mask, need_input, need_params=True):
        return (dy * mask if need_input else None), {}

    def __eq__(self, other):
        return isinstance(other, ReLU)

    def __repr__(self):
        return "ReLU()"


Layer = Affine | Conv2D | ReLU


@dataclass
class Network:
    layers: list
    num_classes: int
    input_shape: tuple[int, ...]

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != (self.num_classes,):
            raise ShapeError(f"network ends in shape {shape}, expected ({self.num_classes},)")

    def parameters(self) -> list[dict[str, np.ndarray]]:
        return [layer.params() for layer in self.layers]

    def num_parameters(self) -> int:
        return sum(p.size for group in self.parameters() for p in group.values())

    def copy(self) -> Network:
        layers = []
        for layer in self.layers:
            if isinstance(layer, Affine):
                layers.append(Affine(layer.weight.copy(), layer.bias.copy()))
            elif isinstance(layer, Conv2D):
                layers.append(
                    Conv2D(layer.kernels.copy(), layer.bias.copy(), layer.stride, layer.padding)
                )
            else:
                layers.append(ReLU())
        return Network(layers, self.num_classes, self.input_shape)


@dataclass
class GradientSet:
    param_grads: list[dict[str, np.ndarray]] | None
    input_grad: np.ndarray | None


@dataclass
class SGDConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class SGDState:
    velocity: list[dict[str, np.ndarray]] = field(default_factory=list)


def _check_batch(net: Network, batch) -> np.ndarray:
    batch = np.asarray(batch, dtype=DTYPE)
    if batch.ndim < 1 or batch.shape[1:] != net.input_shape:
        raise ShapeError(
            f"batch shape {batch.shape} does not match network input (B, *{net.input_shape})"
        )
    return batch


def _check_labels(labels, batch_size: int, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch_size,):
        raise ShapeError(f"expected {batch_size} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelError("labels must be integer class indices")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes})")
    return labels.astype(np.int64, copy=False)


def forward(net: Network, batch) -> np.ndarray:
    """Logits for ``batch``; shape ``(B, num_classes)``."""
    x = _check_batch(net, batch)
    for layer in net.layers:
        x, _ = layer.forward(x)
    return x


def softmax_probs(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=DTYPE)
    if logits.shape[-1] < 2:
        raise ShapeError("softmax needs at least two classes")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, labels) -> float:
    """Mean negative log-probability of the true class."""
    logits = np.asarray(logits, dtype=DTYPE)
    labels = _check_labels(labels, logits.shape[0], logits.shape[1])
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def backward(
    net: Network,
    batch,
    labels,
    *,
    param_grads: bool = True,
    input_grad: bool = True,
) -> tuple[float, GradientSet]:
    """Cross-entropy loss and its gradients.

    Either gradient family can be switched off to skip work: FGSM only needs
    the input gradient, a plain training step only the parameter gradients.
    """
    x = _check_batch(net, batch)
    labels = _check_labels(labels, x.shape[0], net.num_classes)
    caches = []
    for layer in net.layers:
        x, cache = layer.forward(x)
        caches.append(cache)
    logp = _log_softmax(x)
    n = len(labels)
    loss = float(-logp[np.arange(n), labels].mean())

    dy = np.exp(logp)
    dy[np.arange(n), labels] -= 1.0
    dy /= n

    grads: list[dict[str, np.ndarray]] = [{} for _ in net.layers]
    # layers below the first parametrised one are skipped when dx is not wanted
    stop = 0
    if not input_grad:
        stop = next((i for i, layer in enumerate(net.layers) if layer.params()), len(net.layers))
    for i in range(len(net.layers) - 1, stop - 1, -1):
        dy, g = net.layers[i].backward(dy, caches[i], input_grad or i > stop, param_grads)
        if param_grads:
            grads[i] = g
    return loss, GradientSet(
        param_grads=grads if param_grads else None,
        input_grad=dy if input_grad else None,
    )


def sgd_step(
    net: Network, grads: GradientSet, cfg: SGDConfig, state: SGDState | None = None
) -> SGDState:
    """In-place momentum SGD: ``v = m*v + g + wd*theta``, ``theta -= lr*v``."""
    if grads.param_grads is None:
        raise ValueError("sgd_step needs parameter gradients")
    if state is None:
        state = SGDState()
    if not state.velocity:
        state.velocity = [
            {k: np.zeros_like(p) for k, p in layer.params().items()} for layer in net.layers
        ]
    for layer, g, v in zip(net.layers, grads.param_grads, state.velocity):
        for name, p in layer.params().items():
            if g[name].shape != p.shape:
                raise ShapeError(f"gradient for {name} has shape {g[name].shape}, expected {p.shape}")
            step = g[name] + cfg.weight_decay * p if cfg.weight_decay else g[name]
            vel = v[name]
            vel *= cfg.momentum
            vel += step
            p -= cfg.learning_rate * vel
    return state


def predict(net: Network, batch, chunk: int = 1024) -> np.ndarray:
    """Argmax class per sample, evaluated in fixed-size chunks."""
    batch = np.asarray(batch)
    out = np.empty(len(batch), dtype=np.int64)
    for start in range(0, len(batch), chunk):
        out[start : start + chunk] = forward(net, batch[start : start + chunk]).argmax(axis=1)
    return out


# -- model zoo ---------------------------------------------------------------


def _uniform(rng: np.random.Generator, fan_in: int, shape: Sequence[int]) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def mlp(
    input_shape=(28, 28, 1), hidden: int = 256, num_classes: int = 10, seed: int = 0
) -> Network:
    """Two-layer perceptron, 784-256-10 for MNIST."""
    rng = np.random.default_rng(seed)
    n_in = math.prod(input_shape)
    return Network(
        [
            Affine(_uniform(rng, n_in, (hidden, n_in)), np.zeros(hidden)),
            ReLU(),
            Affine(_uniform(rng, hidden, (num_classes, hidden)) / 2, np.zeros(num_classes)),
        ],
        num_classes,
        tuple(input_shape),
    )


def small_cnn(input_shape=(28, 28, 1), num_classes: int = 10, seed: int = 0) -> Network:
    """Two stride-2 convolutions followed by two affine layers."""
    rng = np.random.default_rng(seed)
    h, w, c = input_shape
    conv1 = Conv2D(_uniform(rng, 9 * c, (3, 3, c, 8)), np.zeros(8), stride=2, padding=1)
    s1 = conv1.output_shape(tuple(input_shape))
    conv2 = Conv2D(_uniform(rng, 9 * 8, (3, 3, 8, 16)), np.zeros(16), stride=2, padding=1)
    s2 = conv2.output_shape(s1)
    flat = math.prod(s2)
    return Network(
        [
            conv1,
            ReLU(),
            conv2,
            ReLU(),
            Affine(_uniform(rng, flat, (64, flat)), np.zeros(64)),
            ReLU(),
            Affine(_uniform(rng, 64, (num_classes, 64)) / 2, np.zeros(num_classes)),
        ],
        num_classes,
        tuple(input_shape),
    )


MODELS = {"mlp": mlp, "cnn": small_cnn}


def build_model(name: str, input_shape, num_classes: int, seed: int) -> Network:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(input_shape=tuple(input_shape), num_classes=num_classes, seed=seed)
