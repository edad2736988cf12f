"""FGSM and the two cheap screening perturbations.

All pixels live on the [0, 1] scale. Screening amplitudes quoted on the
0-255 scale (the usual 60) are converted with ``ScreenConfig.from_pixels``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Network, backward
from .seeding import Rng


@dataclass
class AttackConfig:
    epsilon: float = 0.3

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")


@dataclass
class ScreenConfig:
    amplitude: float = 60 / 255
    trials_per_attack: int = 3
    # 0 disables the grid-line attack
    grid_line_cap: int = 5
    grid_fraction: float = 0.05
    grid_value: float = 1.0

    def __post_init__(self):
        if not 0 <= self.amplitude <= 1:
            raise ValueError(f"amplitude must lie in [0, 1], got {self.amplitude}")
        if self.trials_per_attack < 1:
            raise ValueError("trials_per_attack must be positive")
        if self.grid_line_cap < 0:
            raise ValueError("grid_line_cap must be non-negative")
        if not 0 < self.grid_fraction < 1:
            raise ValueError("grid_fraction must lie in (0, 1)")
        if not 0 <= self.grid_value <= 1:
            raise ValueError("grid_value must lie in [0, 1]")

    @classmethod
    def from_pixels(cls, amplitude_255: float, **kwargs) -> ScreenConfig:
        return cls(amplitude=amplitude_255 / 255, **kwargs)


def add_perturbation(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``clip(x + delta, 0, 1)`` with each computed ``|result - x|`` kept <= ``|delta|``.

    ``x + delta`` rounds, so the difference can land one ulp above the step;
    those coordinates are pulled back by one ulp toward ``x``.
    """
    y = x + delta
    over = np.flatnonzero(np.abs(y - x) > np.abs(delta))
    if over.size:
        y.flat[over] = np.nextafter(y.flat[over], x.flat[over])
    return np.clip(y, 0.0, 1.0, out=y)


def fgsm(net: Network, batch, labels, cfg: AttackConfig) -> np.ndarray:
    """One signed-gradient step of size epsilon, clipped to valid pixels."""
    batch = np.asarray(batch, dtype=np.float64)
    _, grads = backward(net, batch, labels, param_grads=False, input_grad=True)
    return add_perturbation(batch, cfg.epsilon * np.sign(grads.input_grad))


def random_perturb(image, cfg: ScreenConfig, rng: Rng) -> np.ndarray:
    """Add independent Uniform(-amplitude, amplitude) noise to every pixel."""
    image = np.asarray(image, dtype=np.float64)
    noise = rng.uniform(-cfg.amplitude, cfg.amplitude, size=image.shape)
    return np.clip(image + noise, 0.0, 1.0)


def grid_count(dim: int, cfg: ScreenConfig) -> int:
    if dim < 1:
        raise ValueError("dimension must be positive")
    n = math.floor(cfg.grid_fraction * dim)
    if n == 0 and dim >= 2:
        n = 1
    return min(cfg.grid_line_cap, n)


def grid_indices(h: int, w: int, cfg: ScreenConfig, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Distinct random rows and columns, each a prefix of a fresh permutation."""
    rows = rng.permutation(h)[: grid_count(h, cfg)]
    cols = rng.permutation(w)[: grid_count(w, cfg)]
    return rows, cols


def grid_lines(image, cfg: ScreenConfig, rng: Rng) -> np.ndarray:
    """Overwrite randomly chosen full rows and columns with ``grid_value``.

    ``image`` is ``(H, W)`` or ``(H, W, C)``; every channel of a chosen line
    is set.
    """
    image = np.asarray(image, dtype=np.float64)
    rows, cols = grid_indices(image.shape[0], image.shape[1], cfg, rng)
    out = image.copy()
    out[rows] = cfg.grid_value
    out[:, cols] = cfg.grid_value
    return out
