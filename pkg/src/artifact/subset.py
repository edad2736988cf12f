"""Screening-based selection of the adversarially-prone training subset.

Each sample is evaluated clean, then under ``trials_per_attack`` uniform-noise
perturbations and ``trials_per_attack`` grid-line perturbations. A sample is
prone when any perturbed evaluation changes the model's clean argmax (the
ground-truth label plays no part).

Trial images are drawn from a per-sample stream, noise trials first and grid
trials second, so results are independent of evaluation order and batching.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .attacks import ScreenConfig, grid_indices
from .nn import Network, forward, softmax_probs
from .seeding import Rng, lane_rng


@dataclass
class PredictionRange:
    sample_index: int
    clean_argmax: int
    trial_argmaxes: list[int]
    prob_min: np.ndarray
    prob_max: np.ndarray
    clean_probs: np.ndarray | None = None


@dataclass
class ProneSubset:
    indices: np.ndarray
    computed_at_epoch: int
    fraction: float

    def __len__(self):
        return len(self.indices)

    def to_json(self) -> dict:
        return {
            "epoch": self.computed_at_epoch,
            "fraction": self.fraction,
            "indices": [int(i) for i in self.indices],
        }


def screening_images(image, cfg: ScreenConfig, rng: Rng, out=None) -> np.ndarray:
    """Stack of ``2 * trials_per_attack`` perturbed copies of ``image``.

    Produces exactly what ``trials_per_attack`` calls to ``random_perturb``
    followed by as many calls to ``grid_lines`` would, with fewer numpy calls.
    """
    t = cfg.trials_per_attack
    if out is None:
        out = np.empty((2 * t,) + image.shape)
    noise = rng.uniform(-cfg.amplitude, cfg.amplitude, size=(t,) + image.shape)
    np.clip(image + noise, 0.0, 1.0, out=out[:t])
    out[t:] = image
    h, w = image.shape[:2]
    for k in range(t, 2 * t):
        rows, cols = grid_indices(h, w, cfg, rng)
        out[k, rows] = cfg.grid_value
        out[k, :, cols] = cfg.grid_value
    return out


def _range_from_probs(index: int, probs: np.ndarray) -> PredictionRange:
    # probs[0] is the clean evaluation
    arg = probs.argmax(axis=1)
    return PredictionRange(
        sample_index=index,
        clean_argmax=int(arg[0]),
        trial_argmaxes=[int(a) for a in arg[1:]],
        prob_min=probs.min(axis=0),
        prob_max=probs.max(axis=0),
        clean_probs=probs[0],
    )


def prediction_range(
    net: Network, image, cfg: ScreenConfig, rng: Rng, index: int = 0
) -> PredictionRange:
    image = np.asarray(image, dtype=np.float64)
    batch = np.concatenate([image[None], screening_images(image, cfg, rng)])
    return _range_from_probs(index, softmax_probs(forward(net, batch)))


def range_over(net: Network, image, trials, index: int = 0) -> PredictionRange:
    """Prediction range of ``image`` over caller-supplied perturbed copies."""
    image = np.asarray(image, dtype=np.float64)
    trials = np.asarray(trials, dtype=np.float64).reshape((-1,) + image.shape)
    batch = np.concatenate([image[None], trials])
    return _range_from_probs(index, softmax_probs(forward(net, batch)))


def is_prone(pred: PredictionRange) -> bool:
    return any(a != pred.clean_argmax for a in pred.trial_argmaxes)


def prediction_ranges(
    net: Network,
    images,
    cfg: ScreenConfig,
    seed: int,
    epoch: int,
    *,
    lane: Callable[[int], Rng] | None = None,
    chunk: int = 256,
) -> list[PredictionRange]:
    """Prediction ranges for every image, evaluated ``chunk`` samples at a time."""
    images = np.asarray(images, dtype=np.float64)
    lane = lane or (lambda i: lane_rng(seed, epoch, i))
    per_sample = 1 + 2 * cfg.trials_per_attack
    out = []
    for start in range(0, len(images), chunk):
        block = images[start : start + chunk]
        stacked = np.empty((len(block), per_sample) + images.shape[1:])
        for k, img in enumerate(block):
            stacked[k, 0] = img
            screening_images(img, cfg, lane(start + k), out=stacked[k, 1:])
        probs = softmax_probs(forward(net, stacked.reshape((-1,) + images.shape[1:])))
        probs = probs.reshape(len(block), per_sample, -1)
        out.extend(_range_from_probs(start + k, probs[k]) for k in range(len(block)))
    return out


def filter_subset(
    net: Network,
    images,
    cfg: ScreenConfig,
    epoch: int,
    seed: int,
    *,
    lane: Callable[[int], Rng] | None = None,
    chunk: int = 256,
) -> ProneSubset:
    images = np.asarray(images)
    if len(images) == 0:
        raise ValueError("cannot filter an empty dataset")
    ranges = prediction_ranges(net, images, cfg, seed, epoch, lane=lane, chunk=chunk)
    indices = np.array([r.sample_index for r in ranges if is_prone(r)], dtype=np.int64)
    return ProneSubset(indices, epoch, len(indices) / len(images))


def refresh_epochs(warmup: int, period: int, epochs: int) -> Sequence[int]:
    """Epochs (0-based) at whose start the subset is recomputed."""
    return list(range(warmup, epochs, period))
