"""Command-line entry point: ``artifact <subcommand>`` or ``python -m artifact``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import checkpoint
from .attacks import AttackConfig
from .config import load_config
from .errors import DataFormatError, InvalidInputError
from .harness import load_data, make_model, run_experiment
from .interval import demo_fig3
from .subset import filter_subset
from .trainer import accuracy, robust_accuracy, sweep_ratio


def _with_seed(cfg, seed):
    return cfg if seed is None else replace(cfg, train=replace(cfg.train, seed=seed))


def cmd_train(args) -> int:
    cfg = _with_seed(load_config(args.config), args.seed)
    if args.deterministic:
        cfg = replace(cfg, deterministic=True)
    summary = run_experiment(cfg, args.out, repeats=args.repeats)
    json.dump(summary["mean"], sys.stdout, indent=2)
    print()
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    net = checkpoint.load(args.checkpoint)
    _, test_set = load_data(cfg)
    eps = args.epsilon if args.epsilon is not None else cfg.train.attack.epsilon
    result = {
        "checkpoint": str(args.checkpoint),
        "epsilon": eps,
        "n": len(test_set),
        "vanilla_acc": accuracy(net, test_set),
        "robust_acc": robust_accuracy(net, test_set, AttackConfig(eps)),
    }
    print(json.dumps(result, indent=2))
    return 0


def cmd_filter(args) -> int:
    cfg = _with_seed(load_config(args.config), args.seed)
    net = checkpoint.load(args.checkpoint)
    train_set, _ = load_data(cfg)
    subset = filter_subset(net, train_set.images, cfg.train.screen, args.epoch, cfg.train.seed)
    text = json.dumps(subset.to_json())
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_sweep(args) -> int:
    cfg = _with_seed(load_config(args.config), args.seed)
    ratios = [int(r) for r in args.ratios.split(",") if r.strip()]
    train_set, test_set = load_data(cfg)
    rows = sweep_ratio(lambda: make_model(cfg, train_set, cfg.train.seed),
                       train_set, test_set, cfg.train, ratios, args.timing_repeats)
    w = csv.writer(sys.stdout, lineterminator="\n")
    header = ["ratio", "robust_acc", "vanilla_acc", "wall_ms", "phase_adv"]
    w.writerow(header)
    for r in rows:
        w.writerow([getattr(r, h) for h in header])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(json.dumps([asdict(r) for r in rows], indent=2) + "\n")
    return 0


def cmd_interval_demo(args) -> int:
    print(json.dumps(demo_fig3(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write metrics/checkpoint/summary")
    t.add_argument("--config", type=Path)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--repeats", type=int, default=1)
    t.add_argument("--deterministic", action="store_true",
                   help="leave wall_ms blank in metrics.csv (timings still go to timing.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="vanilla and FGSM robust accuracy of a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--epsilon", type=float)
    e.add_argument("--config", type=Path)
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("filter", help="emit the prone subset of the training set as JSON")
    f.add_argument("--checkpoint", type=Path, required=True)
    f.add_argument("--config", type=Path)
    f.add_argument("--seed", type=int)
    f.add_argument("--epoch", type=int, default=0)
    f.add_argument("--out", type=Path)
    f.set_defaults(func=cmd_filter)

    s = sub.add_parser("sweep-ratio", help="robust accuracy and wall-clock per mixing ratio")
    s.add_argument("--ratios", default="0,1,2,3,4")
    s.add_argument("--config", type=Path)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", type=Path)
    s.add_argument("--timing-repeats", type=int, default=1,
                   help="train each ratio this many times and keep the fastest wall-clock")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("interval-demo", help="endpoint vs interior propagation report")
    d.set_defaults(func=cmd_interval_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidInputError, DataFormatError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
