"""Shared oracles for the test suite."""
import numpy as np

from artifact.nn import Affine, Conv2D, Network, ReLU, backward, cross_entropy, forward


def random_mlp(rng, n_in=3, hidden=4, n_out=3, scale=1.0) -> Network:
    return Network(
        [
            Affine(rng.normal(0, scale, (hidden, n_in)), rng.normal(0, scale, hidden)),
            ReLU(),
            Affine(rng.normal(0, scale, (n_out, hidden)), rng.normal(0, scale, n_out)),
        ],
        n_out,
        (n_in,),
    )


CONV_GEOMETRIES = [(1, 0), (2, 0), (2, 1)]  # (stride, padding) pairs that stay <= 64 params


def random_conv(rng, stride=1, padding=0) -> Network:
    """4x4x1 input, one 2x2 conv with two channels, affine head."""
    conv = Conv2D(rng.normal(0, 1, (2, 2, 1, 2)), rng.normal(0, 1, 2), stride, padding)
    shape = conv.output_shape((4, 4, 1))
    flat = int(np.prod(shape))
    return Network(
        [conv, ReLU(), Affine(rng.normal(0, 1, (2, flat)), rng.normal(0, 1, 2))],
        2,
        (4, 4, 1),
    )


def preactivations(net: Network, batch) -> list[np.ndarray]:
    out, x = [], np.asarray(batch, dtype=np.float64)
    for layer in net.layers:
        if isinstance(layer, ReLU):
            out.append(x)
        x, _ = layer.forward(x)
    return out


def far_from_kinks(net, batch, margin=1e-3) -> bool:
    """Finite differences are only meaningful away from ReLU kinks."""
    return all(np.abs(p).min() > margin for p in preactivations(net, batch))


def numeric_grads(net: Network, batch, labels, h=1e-5):
    """Central-difference gradients of the mean cross-entropy."""
    def loss():
        return cross_entropy(forward(net, batch), labels)

    param_grads = []
    for group in net.parameters():
        g = {}
        for name, p in group.items():
            d = np.zeros_like(p)
            for i in np.ndindex(p.shape):
                old = p[i]
                p[i] = old + h
                up = loss()
                p[i] = old - h
                down = loss()
                p[i] = old
                d[i] = (up - down) / (2 * h)
            g[name] = d
        param_grads.append(g)
    batch = batch.copy()
    dx = np.zeros_like(batch)
    for i in np.ndindex(batch.shape):
        old = batch[i]
        batch[i] = old + h
        up = cross_entropy(forward(net, batch), labels)
        batch[i] = old - h
        down = cross_entropy(forward(net, batch), labels)
        batch[i] = old
        dx[i] = (up - down) / (2 * h)
    return param_grads, dx


# Central differences at h=1e-5 carry roundoff of about eps_mach * |loss| / h,
# i.e. ~1e-11, so a relative comparison below |g| ~ 1e-6 measures that noise
# rather than the gradient. Smaller coordinates are held to |a - n| <= 1e-10.
GRAD_FLOOR = 1e-6


def relative_error(a, b, floor=GRAD_FLOOR) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradcheck(net, batch, labels, h=1e-5) -> dict:
    """Worst floored relative error, plus the raw figures behind it."""
    _, g = backward(net, batch, labels)
    num_p, num_x = numeric_grads(net, batch, labels, h)
    pairs = [(g.input_grad, num_x)]
    for ana, num in zip(g.param_grads, num_p):
        pairs += [(ana[name], num[name]) for name in ana]
    a = np.concatenate([p[0].ravel() for p in pairs])
    n = np.concatenate([p[1].ravel() for p in pairs])
    big = np.maximum(np.abs(a), np.abs(n)) >= GRAD_FLOOR
    return {
        "rel": float(relative_error(a, n).max()),
        "rel_large": float(relative_error(a[big], n[big]).max()) if big.any() else 0.0,
        "abs_small": float(np.abs(a - n)[~big].max()) if (~big).any() else 0.0,
        "n_small": int((~big).sum()),
        "n": int(a.size),
    }


def max_gradcheck_error(net, batch, labels, h=1e-5) -> float:
    return gradcheck(net, batch, labels, h)["rel"]
