"""Training loops: vanilla, full FGSM, mixed subset-filtered, and free replay.

Epoch bookkeeping: every mode runs ``ceil(N / batch_size)`` optimizer
iterations per epoch. Clean batches come from one sequential stream over a
freshly shuffled permutation of the training set; the stream carries over
between epochs, so in mixed mode (where only some iterations consume it) it
simply wraps less often.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from .attacks import AttackConfig, ScreenConfig, add_perturbation, fgsm
from .data import DatasetHandle
from .nn import Network, SGDConfig, backward, predict, sgd_step
from .seeding import make_rng
from .subset import ProneSubset, filter_subset, refresh_epochs

log = logging.getLogger(__name__)

VANILLA = "vanilla"
ADVERSARIAL = "adversarial"
MODES = ("vanilla", "full_adversarial", "mixed", "free_replay")


@dataclass
class TrainConfig:
    mode: str = "mixed"
    ratio_r: int = 2
    refilter_period_epochs: int = 4
    warmup_epochs: int = 1
    epochs: int = 12
    batch_size: int = 128
    attack: AttackConfig = field(default_factory=AttackConfig)
    screen: ScreenConfig = field(default_factory=ScreenConfig)
    sgd: SGDConfig = field(default_factory=SGDConfig)
    replay_m: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ratio_r < 0:
            raise ValueError("ratio_r must be non-negative")
        for name in ("refilter_period_epochs", "epochs", "batch_size", "replay_m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        for key, sub in (("attack", AttackConfig), ("screen", ScreenConfig), ("sgd", SGDConfig)):
            if isinstance(d.get(key), dict):
                d[key] = sub(**d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRow:
    epoch: int
    phase_vanilla: int
    phase_adv: int
    train_loss: float
    vanilla_acc: float | None
    robust_acc: float | None
    prone_fraction: float | None
    wall_ms: float
    fallbacks: int = 0
    refreshed: bool = False


@dataclass
class TrainReport:
    mode: str
    rows: list[EpochRow] = field(default_factory=list)
    subsets: list[ProneSubset] = field(default_factory=list)
    filter_ms: float = 0.0

    @property
    def total_wall_ms(self) -> float:
        return sum(r.wall_ms for r in self.rows)

    @property
    def final(self) -> EpochRow:
        return self.rows[-1]

    def totals(self) -> dict:
        last = self.final
        return {
            "mode": self.mode,
            "epochs": len(self.rows),
            "phase_vanilla": sum(r.phase_vanilla for r in self.rows),
            "phase_adv": sum(r.phase_adv for r in self.rows),
            "fallbacks": sum(r.fallbacks for r in self.rows),
            "final_train_loss": last.train_loss,
            "vanilla_acc": last.vanilla_acc,
            "robust_acc": last.robust_acc,
            "prone_fraction": last.prone_fraction,
            "wall_ms": self.total_wall_ms,
            "filter_ms": self.filter_ms,
            "refresh_fractions": {s.computed_at_epoch: s.fraction for s in self.subsets},
        }


def schedule(iteration: int, ratio_r: int) -> str:
    """Phase of a 0-based post-warm-up iteration: every (r+1)-th is adversarial."""
    return ADVERSARIAL if (iteration + 1) % (ratio_r + 1) == 0 else VANILLA


class BatchStream:
    """Sequential batches over successive seeded permutations of ``range(n)``."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self.perm = None
        self.pos = n

    def next(self) -> np.ndarray:
        if self.pos >= self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos : self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx


def accuracy(net: Network, data: DatasetHandle) -> float:
    return float((predict(net, data.images) == data.labels).mean())


def robust_accuracy(net: Network, data: DatasetHandle, cfg: AttackConfig, chunk: int = 500) -> float:
    """Accuracy on FGSM-perturbed copies of ``data`` (labels are the true ones)."""
    correct = 0
    for start in range(0, len(data), chunk):
        x = data.images[start : start + chunk]
        y = data.labels[start : start + chunk]
        x_adv = fgsm(net, x, y, cfg)
        correct += int((predict(net, x_adv) == y).sum())
    return correct / len(data)


class _Trainer:
    def __init__(self, net: Network, data: DatasetHandle, cfg: TrainConfig):
        self.net, self.data, self.cfg = net, data, cfg
        self.state = None
        self.stream = BatchStream(len(data), cfg.batch_size, make_rng(cfg.seed, 0))
        self.picker = make_rng(cfg.seed, 2)
        self.losses: list[float] = []
        self.max_delta = 0.0

    def step(self, x, y) -> None:
        loss, grads = backward(self.net, x, y, input_grad=False)
        self.state = sgd_step(self.net, grads, self.cfg.sgd, self.state)
        self.losses.append(loss)

    def vanilla(self) -> None:
        idx = self.stream.next()
        self.step(self.data.images[idx], self.data.labels[idx])

    def adversarial(self, idx) -> None:
        x, y = self.data.images[idx], self.data.labels[idx]
        self.step(fgsm(self.net, x, y, self.cfg.attack), y)

    def free_replay(self) -> int:
        """Replay one batch ``replay_m`` times, recycling each backward pass.

        A seeding pass at the clean batch sets the perturbation; every replay
        then trains on ``x + delta`` and, from the same backward pass, moves
        delta by ``eps * sign(input grad)`` projected back to the eps-ball.
        """
        eps = self.cfg.attack.epsilon
        idx = self.stream.next()
        x, y = self.data.images[idx], self.data.labels[idx]
        _, g = backward(self.net, x, y, param_grads=False)
        delta = np.clip(eps * np.sign(g.input_grad), -eps, eps)
        self.max_delta = max(self.max_delta, float(np.abs(delta).max()))
        m = self.cfg.replay_m
        for j in range(m):
            need_dx = j < m - 1
            loss, g = backward(self.net, add_perturbation(x, delta), y, input_grad=need_dx)
            self.state = sgd_step(self.net, g, self.cfg.sgd, self.state)
            self.losses.append(loss)
            if need_dx:
                delta = np.clip(delta + eps * np.sign(g.input_grad), -eps, eps)
                self.max_delta = max(self.max_delta, float(np.abs(delta).max()))
        return m


def train(
    net: Network,
    train_set: DatasetHandle,
    test_set: DatasetHandle | None,
    cfg: TrainConfig,
    *,
    eval_every: int = 1,
    on_epoch: Callable[[EpochRow], None] | None = None,
) -> TrainReport:
    """Train ``net`` in place.

    Accuracy is evaluated on ``test_set`` every ``eval_every`` epochs and always
    after the last one (``eval_every=0`` means last epoch only); evaluation
    runs outside the timed region. Screening time is inside it.
    """
    t = _Trainer(net, train_set, cfg)
    report = TrainReport(mode=cfg.mode)
    iters = math.ceil(len(train_set) / cfg.batch_size)
    refresh = set(refresh_epochs(cfg.warmup_epochs, cfg.refilter_period_epochs, cfg.epochs))
    subset: ProneSubset | None = None
    sched_iter = 0

    for epoch in range(cfg.epochs):
        n_van = n_adv = fallbacks = 0
        refreshed = False
        t.losses = []
        start = time.perf_counter()

        if cfg.mode == "mixed" and epoch in refresh:
            f0 = time.perf_counter()
            subset = filter_subset(net, train_set.images, cfg.screen, epoch, cfg.seed)
            report.filter_ms += (time.perf_counter() - f0) * 1e3
            report.subsets.append(subset)
            refreshed = True

        for _ in range(iters):
            if cfg.mode == "vanilla" or (cfg.mode == "mixed" and epoch < cfg.warmup_epochs):
                t.vanilla()
                n_van += 1
            elif cfg.mode == "full_adversarial":
                t.adversarial(t.stream.next())
                n_adv += 1
            elif cfg.mode == "free_replay":
                n_adv += t.free_replay()
            else:
                phase = schedule(sched_iter, cfg.ratio_r)
                sched_iter += 1
                if phase == VANILLA:
                    t.vanilla()
                    n_van += 1
                elif subset is None or len(subset) == 0:
                    t.vanilla()
                    n_van += 1
                    fallbacks += 1
                else:
                    t.adversarial(t.picker.choice(subset.indices, size=cfg.batch_size))
                    n_adv += 1

        wall_ms = (time.perf_counter() - start) * 1e3
        last = epoch == cfg.epochs - 1
        evaluate = test_set is not None and (last or (eval_every and (epoch + 1) % eval_every == 0))
        row = EpochRow(
            epoch=epoch,
            phase_vanilla=n_van,
            phase_adv=n_adv,
            train_loss=float(np.mean(t.losses)),
            vanilla_acc=accuracy(net, test_set) if evaluate else None,
            robust_acc=robust_accuracy(net, test_set, cfg.attack) if evaluate else None,
            prone_fraction=subset.fraction if subset is not None else None,
            wall_ms=wall_ms,
            fallbacks=fallbacks,
            refreshed=refreshed,
        )
        if fallbacks:
            log.warning("epoch %d: prone subset empty, %d adversarial iterations ran vanilla",
                        epoch, fallbacks)
        if refreshed:
            log.info("epoch %d: prone subset refreshed, fraction %.4f (%d samples)",
                     epoch, subset.fraction, len(subset))
        log.info("epoch %d %s loss=%.4f acc=%s robust=%s wall=%.0fms", epoch, cfg.mode,
                 row.train_loss, row.vanilla_acc, row.robust_acc, wall_ms)
        report.rows.append(row)
        if on_epoch:
            on_epoch(row)
    return report


@dataclass
class SweepRow:
    ratio: int
    robust_acc: float
    vanilla_acc: float
    wall_ms: float
    phase_adv: int


def sweep_ratio(
    net_factory: Callable[[], Network],
    train_set: DatasetHandle,
    test_set: DatasetHandle,
    cfg: TrainConfig,
    ratios: Sequence[int],
    timing_repeats: int = 1,
) -> list[SweepRow]:
    """Train one fresh mixed-mode model per ratio, same seed for all.

    With ``timing_repeats > 1`` each ratio is trained that many times and the
    smallest wall-clock is kept; runs are deterministic, so the accuracies of
    every repeat are identical.
    """
    if not ratios:
        raise ValueError("need at least one ratio")
    if timing_repeats < 1:
        raise ValueError("timing_repeats must be positive")
    rows = []
    for r in ratios:
        walls = []
        for _ in range(timing_repeats):
            rep = train(net_factory(), train_set, test_set, replace(cfg, mode="mixed", ratio_r=r),
                        eval_every=0)
            walls.append(rep.total_wall_ms)
        rows.append(SweepRow(r, rep.final.robust_acc, rep.final.vanilla_acc, min(walls),
                             sum(x.phase_adv for x in rep.rows)))
    return rows
