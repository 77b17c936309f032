"""
Command-line entry point.

    tail-augment synth --out-dir data/ --seed 3
    tail-augment pipeline --train-corpus data/train.labels --train-features data/train.features \\
        --test-corpus data/test.labels --test-features data/test.features --tail-count 12
    tail-augment ttest runs_a.txt runs_b.txt

Exit codes: 0 success, 2 invalid input or arguments, 3 numerical failure,
1 any other error.
"""

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .corpus import corpus_stats, split_head_tail
from .errors import NumericalError, TailAugmentError, ValidationError
from .metrics import EvalReport, pooled_ttest, read_runs
from .pipeline import (
    MODES,
    SWEEP_PARAMETERS,
    Inputs,
    Pipeline,
    PipelineConfig,
    build_config,
    coerce_value,
    sweep,
    sweep_table,
)
from .synthgen import SynthSpec, generate as generate_synthetic, write_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

STAGE_COMMANDS = {
    "train-base": "train_base",
    "collect": "collect",
    "eigen": "eigen",
    "generate": "generate",
    "adjust": "adjust",
}

# Flags given an explicit definition below instead of the generic one.
_EXPLICIT = ("checkpoint", "out", "mode", "seed", "workers", "negative_policy")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--verbose", action="store_true", help="Enable verbose logging")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run settings (override --config)")
    group.add_argument("--config", help="key=value settings file (default: $TAIL_AUGMENT_CONFIG)")
    group.add_argument("--checkpoint", help="Checkpoint file read before and written after each stage")
    group.add_argument("--out", help="Also write the report or table to this file")
    group.add_argument("--mode", choices=MODES, help="Ablation mode (default: complete)")
    group.add_argument("--seed", type=int, help="Seed for every random stream (default: 0)")
    group.add_argument("--workers", type=int, help="Threads for parallel stages; never changes results")
    group.add_argument("--negative-policy", choices=("balanced", "tail", "head"),
                       help="Where tail-row negatives come from (default: balanced)")
    for f in fields(PipelineConfig):
        if f.name in _EXPLICIT:
            continue
        group.add_argument(_flag(f.name), dest=f.name, metavar="VALUE", help=f"(default: {f.default})")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {}
    for f in fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if isinstance(value, str) and f.name not in ("mode", "negative_policy"):
            value = coerce_value(f.name, value, where=_flag(f.name))
        overrides[f.name] = value
    return build_config(args.config, overrides)


def _emit(text: str, out: Optional[str]) -> None:
    print(text)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        logger.info("Wrote %s", path)


def _format_report(report: EvalReport, fmt: str) -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "tsv":
        return report.to_tsv().rstrip("\n")
    return report.summary()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tail-augment",
        description="Tail Augment -- head-to-tail relation transfer for long-tailed multi-label classification",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Write a synthetic long-tailed dataset")
    _add_common(synth)
    synth.add_argument("--out-dir", required=True, help="Directory for train/test files")
    synth.add_argument("--features-only", action="store_true", help="Write only the feature files")
    for f in fields(SynthSpec):
        synth.add_argument(_flag(f.name), dest=f.name, type=type(f.default), default=f.default,
                           help=f"(default: {f.default})")

    stats = sub.add_parser("stats", help="Dataset statistics of the training corpus")
    _add_common(stats)
    _add_config_flags(stats)
    stats.add_argument("--format", choices=["summary", "json"], default="summary")

    for name in STAGE_COMMANDS:
        stage = sub.add_parser(name, help=f"Run the {name} stage against --checkpoint")
        _add_common(stage)
        _add_config_flags(stage)

    for name, help_text in (("eval", "Evaluate the adjusted classifier"), ("pipeline", "Run every stage")):
        cmd = sub.add_parser(name, help=help_text)
        _add_common(cmd)
        _add_config_flags(cmd)
        cmd.add_argument("--format", choices=["summary", "json", "tsv"], default="summary",
                         help="Report format (default: summary)")

    sweep_cmd = sub.add_parser("sweep", help="One pipeline run per parameter value")
    _add_common(sweep_cmd)
    _add_config_flags(sweep_cmd)
    sweep_cmd.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    sweep_cmd.add_argument("--values", required=True, nargs="+", help="Values to sweep")

    ttest = sub.add_parser("ttest", help="Pooled two-sample t-test on two run files")
    _add_common(ttest)
    ttest.add_argument("runs_a", help="File with one run value per line")
    ttest.add_argument("runs_b", help="File with one run value per line")
    ttest.add_argument("--format", choices=["summary", "json"], default="summary")
    return parser


def _run(args: argparse.Namespace) -> None:
    if args.command == "synth":
        spec = SynthSpec(**{f.name: getattr(args, f.name) for f in fields(SynthSpec)})
        paths = write_dataset(args.out_dir, generate_synthetic(spec), features_only=args.features_only)
        print(json.dumps(paths, indent=2, sort_keys=True))
        return

    if args.command == "ttest":
        result = pooled_ttest(read_runs(args.runs_a), read_runs(args.runs_b))
        if args.format == "json":
            print(json.dumps(result._asdict(), sort_keys=True))
        else:
            print(f"t = {result.t:.6g}  df = {result.df}  p = {result.p:.6g}")
        return

    config = _config_from_args(args)

    if args.command == "stats":
        inputs = Inputs(config)
        stats = corpus_stats(inputs.corpus, split_head_tail(inputs.base_space, config.tail_count))
        if args.format == "json":
            print(json.dumps(stats, indent=2, sort_keys=True))
        else:
            for key, value in stats.items():
                print(f"{key}: {value:.4g}" if isinstance(value, float) else f"{key}: {value}")
        return

    if args.command == "sweep":
        results = sweep(config, args.parameter, args.values)
        _emit(sweep_table(args.parameter, results).rstrip("\n"), config.out)
        return

    if args.command in STAGE_COMMANDS and not config.checkpoint:
        raise ValidationError(f"{args.command} needs --checkpoint to carry results between stages")

    pipeline = Pipeline(config)
    if args.command in STAGE_COMMANDS:
        getattr(pipeline, STAGE_COMMANDS[args.command])()
        return
    report = pipeline.evaluate() if args.command == "eval" else pipeline.run()
    _emit(_format_report(report, args.format), config.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )

    try:
        _run(args)
    except ValidationError as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except NumericalError as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL
    except TailAugmentError as e:
        logger.error("%s", e)
        return EXIT_ERROR
    except OSError as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
