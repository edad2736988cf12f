"""Run configuration: JSON file, environment overrides, defaults.

A config file is a JSON object whose keys are the ``TrainConfig`` fields
(``mode``, ``ratio_r``, ``refilter_period_epochs``, ``warmup_epochs``,
``epochs``, ``batch_size``, ``attack``, ``screen``, ``sgd``, ``replay_m``,
``seed``) plus three run-level keys: ``dataset``, ``model`` and
``deterministic``. Amplitudes and epsilons are on the [0, 1] pixel scale.

Any key can be overridden from the environment with the ``ARTIFACT_`` prefix,
upper-cased, nested keys joined by a double underscore. Values are parsed as
JSON when possible, otherwise kept as strings::

    ARTIFACT_RATIO_R=4
    ARTIFACT_ATTACK__EPSILON=0.1
    ARTIFACT_SCREEN__AMPLITUDE=0.1176
    ARTIFACT_DATASET__TRAIN_LIMIT=1000
    ARTIFACT_MODEL=cnn
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .trainer import TrainConfig

ENV_PREFIX = "ARTIFACT_"
RUN_KEYS = ("dataset", "model", "deterministic")
REPO_ROOT = Path(__file__).resolve().parents[2]


def default_dataset() -> dict:
    root = Path(os.environ.get("ARTIFACT_DATA_DIR", REPO_ROOT / "data" / "mnist5k"))
    return {
        "name": "mnist",
        "format": "idx",
        "train_images": str(root / "train-images-idx3-ubyte.gz"),
        "train_labels": str(root / "train-labels-idx1-ubyte.gz"),
        "test_images": str(root / "t10k-images-idx3-ubyte.gz"),
        "test_labels": str(root / "t10k-labels-idx1-ubyte.gz"),
    }


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: dict = field(default_factory=default_dataset)
    model: str = "mlp"
    # blanks wall-clock in metrics.csv so repeated runs are byte-identical
    deterministic: bool = False
    base_dir: Path = field(default_factory=Path.cwd)

    def to_dict(self) -> dict:
        d = self.train.to_dict()
        d.update(dataset=self.dataset, model=self.model, deterministic=self.deterministic)
        return d


def apply_env(raw: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    raw = copy.deepcopy(raw)
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or name == "ARTIFACT_DATA_DIR":
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = parsed
    return raw


def from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    raw = dict(raw)
    run = {k: raw.pop(k) for k in RUN_KEYS if k in raw}
    dataset = default_dataset()
    if "dataset" in run:
        dataset = run["dataset"] if "format" in run["dataset"] else {**dataset, **run["dataset"]}
    return RunConfig(
        train=TrainConfig.from_dict(raw),
        dataset=dataset,
        model=run.get("model", "mlp"),
        deterministic=bool(run.get("deterministic", False)),
        base_dir=base_dir or Path.cwd(),
    )


def load_config(path=None, environ=None) -> RunConfig:
    """Config from ``path`` (or defaults) with environment overrides applied."""
    raw, base = {}, None
    if path is not None:
        path = Path(path)
        raw = json.loads(path.read_text())
        base = path.parent
    return from_dict(apply_env(raw, environ), base)
