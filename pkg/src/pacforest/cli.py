"""Command-line entry point: ``pacforest run ...`` and ``pacforest sweep ...``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bound_math import XiMode
from .errors import ConfigurationError, DataError, NumericError, PacForestError
from .experiments import ExperimentConfig, Setting, run_experiment, run_sweep
from .forest import SplitFeatureMode, TreeConfig
from .stats import EvalMode


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _trees(text):
    return None if text == "auto" else _positive_int(text)


def _depth(text):
    return None if text.lower() == "none" else _positive_int(text)


def _depth_list(text):
    return [_depth(t.strip()) for t in text.split(",") if t.strip()]


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _common(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--label", default=None, help="label column (default: last column)")
    p.add_argument("--positive", default=None, help="label value mapped to +1 (default: first seen)")
    p.add_argument("--classes", default=None, help="comma-separated labels to keep, e.g. A,B")
    p.add_argument("--setting", choices=[s.value for s in Setting], default=Setting.BAGGING.value)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--trees", type=_trees, default=None, metavar="{auto|N}")
    p.add_argument("--eval-mode", choices=[m.value for m in EvalMode], default=None,
                   help="restrict validation runs to one evaluation mode")
    p.add_argument("--xi", choices=[m.value for m in XiMode], default=XiMode.XI.value,
                   help="complexity constant flagged as primary")
    p.add_argument("--repeats", type=_positive_int, default=1, help="consecutive seeds to run and average")
    p.add_argument("--out", default=None, help="report path; a CSV is written next to it")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pacforest", description="Random forests with PAC-Bayesian vote bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment setting")
    _common(run)
    run.add_argument("--max-depth", type=_depth, default=None, metavar="{none|N}")
    run.add_argument("--features", choices=[m.value for m in SplitFeatureMode], default="all")

    sweep = sub.add_parser("sweep", help="vary tree depth and split-feature mode")
    _common(sweep)
    sweep.add_argument("--depths", type=_depth_list, required=True, help="e.g. 1,2,4,8,none")
    sweep.add_argument("--features", default="all,one", help="comma-separated subset of all,one")
    return parser


def _config(args, tree_config) -> ExperimentConfig:
    return ExperimentConfig(
        setting=Setting(args.setting),
        dataset_path=args.data,
        label_column=args.label,
        positive_label=args.positive,
        classes=tuple(args.classes.split(",")) if args.classes else None,
        seed=args.seed,
        delta=args.delta,
        trees=args.trees,
        tree_config=tree_config,
        eval_mode=EvalMode(args.eval_mode) if args.eval_mode else None,
        xi_mode=XiMode(args.xi),
        repeats=args.repeats,
        output=args.out,
    )


def _main(args) -> None:
    if args.command == "run":
        cfg = _config(args, TreeConfig(args.max_depth, SplitFeatureMode(args.features)))
        report = run_experiment(cfg)
        if not args.out:
            for key, value in sorted(report["mean"].items()):
                print(f"{key}\t{value:.6f}")
        return
    modes = [f.strip() for f in args.features.split(",") if f.strip()]
    bad = [f for f in modes if f not in {m.value for m in SplitFeatureMode}]
    if bad or not modes:
        raise ConfigurationError(f"unknown feature modes {bad}; use all and/or one")
    cfg = _config(args, TreeConfig())
    rows = run_sweep(cfg, args.depths, modes)
    if not args.out:
        for r in rows:
            print("\t".join(f"{k}={r[k]}" for k in ("features", "max_depth", "gibbs", "test", "p0", "p1", "p2")))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        _main(args)
    except (DataError, ConfigurationError, NumericError, PacForestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # invalid numeric arguments surfacing from the library
        print(f"error: {exc}", file=sys.stderr)
        return ConfigurationError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
