"""Interval bound propagation and the endpoint-insufficiency demonstration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .nn import Affine, Conv2D, Network, ReLU, forward, softmax_probs


@dataclass
class IntervalTensor:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape:
            raise ShapeError(f"bounds differ in shape: {self.lower.shape} vs {self.upper.shape}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def around(cls, x, radius) -> IntervalTensor:
        x = np.asarray(x, dtype=np.float64)
        return cls(x - radius, x + radius)

    def contains(self, x) -> np.ndarray:
        return (self.lower <= x) & (x <= self.upper)


def _from_center(mid, rad) -> IntervalTensor:
    return IntervalTensor(mid - rad, mid + rad)


def propagate_affine(weight, bias, iv: IntervalTensor) -> IntervalTensor:
    """Affine bounds for a vector ``(in,)`` or a batch ``(B, ...)``.

    Computed as centre ``W m + b`` plus/minus radius ``|W| r``, which equals
    ``W+ lower + W- upper + b`` / ``W+ upper + W- lower + b`` and keeps a
    zero-width box on exactly the arithmetic ``forward`` uses.
    """
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    lo, hi = iv.lower, iv.upper
    if lo.ndim > 1:
        lo, hi = lo.reshape(lo.shape[0], -1), hi.reshape(hi.shape[0], -1)
    if lo.shape[-1] != weight.shape[1]:
        raise ShapeError(f"interval of width {lo.shape[-1]} does not fit weight {weight.shape}")
    mid, rad = (lo + hi) / 2, (hi - lo) / 2
    return _from_center(mid @ weight.T + bias, rad @ np.abs(weight).T)


def propagate_relu(iv: IntervalTensor) -> IntervalTensor:
    return IntervalTensor(np.maximum(iv.lower, 0), np.maximum(iv.upper, 0))


def propagate_conv(layer: Conv2D, iv: IntervalTensor) -> IntervalTensor:
    """The affine rule applied to the unrolled convolution."""
    mid, rad = (iv.lower + iv.upper) / 2, (iv.upper - iv.lower) / 2
    mag = Conv2D(np.abs(layer.kernels), np.zeros_like(layer.bias), layer.stride, layer.padding)
    return _from_center(layer.forward(mid)[0], mag.forward(rad)[0])


def propagate_network(net: Network, iv: IntervalTensor) -> IntervalTensor:
    """Logit bounds for every input in ``iv`` (batched ``(B, *input_shape)``)."""
    if iv.lower.shape[1:] != net.input_shape:
        raise ShapeError(f"interval shape {iv.lower.shape} does not match network input")
    for layer in net.layers:
        if isinstance(layer, Affine):
            iv = propagate_affine(layer.weight, layer.bias, iv)
        elif isinstance(layer, Conv2D):
            iv = propagate_conv(layer, iv)
        elif isinstance(layer, ReLU):
            iv = propagate_relu(iv)
        else:
            raise TypeError(f"no interval rule for {layer!r}")
    return iv


def probability_bounds(logit_iv: IntervalTensor) -> IntervalTensor:
    """Per-class softmax bounds from a logit box.

    Class k's probability rises with its own logit and falls with every other
    one, so its extremes sit at the box corner that pushes logit k to one end
    and all other logits to the opposite end.
    """
    lo, hi = logit_iv.lower, logit_iv.upper
    c = lo.shape[-1]
    p_lo = np.empty_like(lo)
    p_hi = np.empty_like(hi)
    eye = np.eye(c, dtype=bool)
    for k in range(c):
        p_lo[..., k] = softmax_probs(np.where(eye[k], lo, hi))[..., k]
        p_hi[..., k] = softmax_probs(np.where(eye[k], hi, lo))[..., k]
    return IntervalTensor(p_lo, p_hi)


def fig3_network() -> Network:
    """Two-input ReLU net whose extreme output lies away from the box endpoints.

    Hidden units are ``relu(x1 - x2)`` and ``relu(x2 - x1)``; the logits are
    ``2*h1 + h2`` and ``h2``.
    """
    return Network(
        [
            Affine([[1.0, -1.0], [-1.0, 1.0]], [0.0, 0.0]),
            ReLU(),
            Affine([[2.0, 1.0], [0.0, 1.0]], [0.0, 0.0]),
        ],
        num_classes=2,
        input_shape=(2,),
    )


def demo_fig3(center=(2.0, 3.0), radius: float = 2.0, probe=(4.0, 1.0)) -> dict:
    """Compare endpoint propagation with a point sampled inside the input box."""
    net = fig3_network()
    center = np.asarray(center, dtype=np.float64)
    iv = IntervalTensor.around(center[None], radius)

    def probs(x):
        return softmax_probs(forward(net, np.asarray(x, dtype=np.float64)[None]))[0]

    point = probs(center)
    corners = {
        "lower": probs(iv.lower[0]),
        "upper": probs(iv.upper[0]),
    }
    inside = probs(probe)
    bounds = propagate_network(net, iv)
    pbounds = probability_bounds(bounds)
    corner_max = max(p[0] for p in corners.values())
    return {
        "weights_note": "constructed weights chosen to reproduce the quoted outputs",
        "input_box": {"lower": iv.lower[0].tolist(), "upper": iv.upper[0].tolist()},
        "point_outputs": {"input": center.tolist(), "probs": point.tolist()},
        "corner_outputs": {
            name: {"input": (iv.lower if name == "lower" else iv.upper)[0].tolist(),
                   "probs": p.tolist()}
            for name, p in corners.items()
        },
        "interior_output": {"input": list(map(float, probe)), "probs": inside.tolist()},
        "ibp_bounds": {
            "logit_lower": bounds.lower[0].tolist(),
            "logit_upper": bounds.upper[0].tolist(),
            "prob_lower": pbounds.lower[0].tolist(),
            "prob_upper": pbounds.upper[0].tolist(),
        },
        "interior_exceeds_corners": bool(inside[0] > corner_max),
    }
