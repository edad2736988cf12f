"""Experiment orchestration and on-disk artifacts.

Per run the output directory receives::

    metrics.csv      one row per epoch (schema below)
    timing.csv       per-epoch wall-clock; always measured
    checkpoint.bin   final parameters (see ``artifact.checkpoint``)
    summary.json     config, totals and, for repeats, per-seed records + means

With ``repeats > 1`` each seed gets its own ``seed-<n>/`` subdirectory and the
top-level summary aggregates them.

metrics.csv starts with a ``# metrics-schema v1`` comment line followed by the
header ``epoch,phase_vanilla,phase_adv,train_loss,vanilla_acc,robust_acc,
prone_fraction,wall_ms``. Empty cells mean "not measured" (accuracy on
epochs that were not evaluated, prone fraction outside mixed mode, and
wall_ms in deterministic runs).
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import replace
from pathlib import Path
from statistics import fmean

from . import checkpoint
from .config import RunConfig
from .data import DatasetHandle, load_dataset
from .nn import Network, build_model
from .trainer import TrainReport, train

log = logging.getLogger(__name__)

SCHEMA_LINE = "# metrics-schema v1"
METRICS_HEADER = [
    "epoch", "phase_vanilla", "phase_adv", "train_loss",
    "vanilla_acc", "robust_acc", "prone_fraction", "wall_ms",
]
MEAN_FIELDS = ("vanilla_acc", "robust_acc", "final_train_loss", "prone_fraction", "wall_ms",
               "filter_ms", "phase_vanilla", "phase_adv")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(report: TrainReport, with_wall_clock: bool = True) -> str:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in report.rows:
        w.writerow([_cell(x) for x in (
            r.epoch, r.phase_vanilla, r.phase_adv, r.train_loss, r.vanilla_acc,
            r.robust_acc, r.prone_fraction, r.wall_ms if with_wall_clock else None,
        )])
    return buf.getvalue()


def timing_csv(report: TrainReport) -> str:
    lines = ["epoch,wall_ms,refreshed"]
    lines += [f"{r.epoch},{r.wall_ms!r},{int(r.refreshed)}" for r in report.rows]
    return "\n".join(lines) + "\n"


def load_data(cfg: RunConfig) -> tuple[DatasetHandle, DatasetHandle]:
    return load_dataset(cfg.dataset, cfg.base_dir)


def make_model(cfg: RunConfig, train_set: DatasetHandle, seed: int) -> Network:
    classes = int(cfg.dataset.get("num_classes", 10))
    if train_set.num_classes > classes:
        raise ValueError(f"labels reach {train_set.num_classes - 1} but num_classes is {classes}")
    return build_model(cfg.model, train_set.images.shape[1:], classes, seed)


def run_once(cfg: RunConfig, out: Path, data=None) -> dict:
    train_set, test_set = data or load_data(cfg)
    net = make_model(cfg, train_set, cfg.train.seed)
    report = train(net, train_set, test_set, cfg.train)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(report, not cfg.deterministic))
    (out / "timing.csv").write_text(timing_csv(report))
    checkpoint.save(net, out / "checkpoint.bin")
    record = {"seed": cfg.train.seed, **report.totals(), "checkpoint": str(out / "checkpoint.bin")}
    record["refresh_fractions"] = {str(k): v for k, v in record["refresh_fractions"].items()}
    return record


def run_experiment(cfg: RunConfig, out, repeats: int = 1) -> dict:
    """Train with seeds ``seed .. seed+repeats-1`` and write all artifacts."""
    if repeats < 1:
        raise ValueError("repeats must be positive")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = load_data(cfg)
    runs = []
    for k in range(repeats):
        seed_cfg = replace(cfg, train=replace(cfg.train, seed=cfg.train.seed + k))
        run_dir = out if repeats == 1 else out / f"seed-{seed_cfg.train.seed}"
        log.info("run %d/%d seed=%d -> %s", k + 1, repeats, seed_cfg.train.seed, run_dir)
        runs.append(run_once(seed_cfg, run_dir, data))
    mean = {}
    for key in MEAN_FIELDS:
        vals = [r[key] for r in runs if r.get(key) is not None]
        mean[key] = fmean(vals) if vals else None
    summary = {"schema": 1, "config": cfg.to_dict(), "repeats": repeats, "runs": runs, "mean": mean}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
