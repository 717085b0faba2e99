"""Command-line interface.

Subcommands: ``synth-data`` (generate an LTDS bundle), ``train`` (run an
experiment from a JSON config), ``eval`` (score a checkpoint on a dataset),
``analyze-ot`` (transport cost between the two feature taps),
``check-theory`` (sum-class complexity check), and ``report`` (merge run
records into a comparison CSV plus figures).
"""

from __future__ import annotations

import argparse
import json
import sys

from .autodiff import Rng
from .data import (
    LongTailProfile,
    SynthConfig,
    atomic_write_json,
    synth_longtail,
    write_dataset,
)
from .errors import ConfigError, ContractError, ConvergenceError, DegenerateClassError, DimensionError, FormatError, TrainingDiverged
from .harness import ExperimentConfig, analyze_ot, check_theory, evaluate_checkpoint, train
from .metrics import format_summary, write_per_class_csv, write_report_json


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltlab", description="long-tailed classification laboratory"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic long-tailed LTDS bundle")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--if", dest="imbalance_factor", type=float, required=True,
                   help="imbalance factor N_max/N_min")
    p.add_argument("--nmax", type=int, required=True, help="head-class training count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=16)
    p.add_argument("--noise-std", type=float, default=0.15)
    p.add_argument("--contrast", type=float, default=0.5)
    p.add_argument("--val-frac", type=float, default=0.15)
    p.add_argument("--test-frac", type=float, default=0.25)
    p.add_argument("--balanced-test", action="store_true",
                   help="equal test counts per class instead of the natural imbalance")
    p.add_argument("-o", "--output", required=True, help="output bundle directory")

    p = sub.add_parser("train", help="train from a JSON experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None, help="override config output_dir")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--t-many", type=int, default=100)
    p.add_argument("--t-few", type=int, default=20)
    p.add_argument("--no-groups", action="store_true")
    p.add_argument("--head", choices=("ensemble", "s1", "s2"), default=None,
                   help="prediction source for dual heads (default: per checkpoint config)")
    p.add_argument("-o", "--output-dir", default=None,
                   help="write eval_report.json and per_class.csv here")

    p = sub.add_parser("analyze-ot", help="transport cost between the two feature taps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--marginal-tol", type=float, default=1e-8)
    p.add_argument("--normalization", choices=("joint_standardize", "none"),
                   default="joint_standardize")
    p.add_argument("--max-samples", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None, help="write the JSON result here")

    p = sub.add_parser("check-theory", help="sum-class Rademacher complexity check")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--hypotheses", type=int, default=24)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default=None, help="write the JSON result here")

    p = sub.add_parser("report", help="merge runs into a comparison CSV and figures")
    p.add_argument("runs", nargs="+", help="run directories (each holding run_record.json)")
    p.add_argument("-o", "--output-dir", default="report")

    return parser


def _cmd_synth_data(args) -> int:
    profile = LongTailProfile(
        num_classes=args.classes,
        n_max=args.nmax,
        imbalance_factor=args.imbalance_factor,
    )
    gen = SynthConfig(
        image_size=args.image_size,
        noise_std=args.noise_std,
        contrast=args.contrast,
        val_fraction=args.val_frac,
        test_fraction=args.test_frac,
        balanced_test=args.balanced_test,
    )
    bundle = synth_longtail(profile, gen, Rng(args.seed).substream("data"))
    write_dataset(bundle, args.output)
    sizes = {name: int(ds.labels.size) for name, ds in bundle.splits.items()}
    print(f"wrote {args.output}: counts {bundle.counts.tolist()}, splits {sizes}")
    return 0


def _cmd_train(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    train(cfg, verbose=not args.quiet)
    return 0


def _cmd_eval(args) -> int:
    report, bundle, assignment = evaluate_checkpoint(
        args.checkpoint,
        args.data,
        split=args.split,
        t_many=args.t_many,
        t_few=args.t_few,
        with_groups=not args.no_groups,
        predict_from=args.head,
    )
    print(format_summary(report))
    if args.output_dir:
        import os

        os.makedirs(args.output_dir, exist_ok=True)
        write_report_json(report, os.path.join(args.output_dir, "eval_report.json"))
        write_per_class_csv(
            report,
            bundle.counts,
            os.path.join(args.output_dir, "per_class.csv"),
            assignment,
        )
        print(f"wrote {args.output_dir}")
    return 0


def _cmd_analyze_ot(args) -> int:
    result = analyze_ot(
        args.checkpoint,
        args.data,
        split=args.split,
        epsilon=args.epsilon,
        p=args.p,
        max_iters=args.max_iters,
        marginal_tol=args.marginal_tol,
        normalization=args.normalization,
        max_samples=args.max_samples,
        seed=args.seed,
    )
    print(json.dumps(result, indent=2))
    if args.output:
        atomic_write_json(args.output, result)
    return 0


def _cmd_check_theory(args) -> int:
    result = check_theory(
        args.checkpoint,
        args.data,
        split=args.split,
        num_samples=args.samples,
        num_hypotheses=args.hypotheses,
        noise=args.noise,
        num_sigma_draws=args.draws,
        seed=args.seed,
    )
    print(json.dumps(result, indent=2))
    if args.output:
        atomic_write_json(args.output, result)
    return 0


def _cmd_report(args) -> int:
    from .report import format_comparison_table, write_comparison

    csv_path = write_comparison(args.runs, args.output_dir)
    print(format_comparison_table(args.runs))
    print(f"wrote {csv_path} (+ figures)")
    return 0


_COMMANDS = {
    "synth-data": _cmd_synth_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "analyze-ot": _cmd_analyze_ot,
    "check-theory": _cmd_check_theory,
    "report": _cmd_report,
}

_USER_ERRORS = (
    ConfigError,
    ContractError,
    ConvergenceError,
    DegenerateClassError,
    DimensionError,
    FormatError,
    TrainingDiverged,
)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
