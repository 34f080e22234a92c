"""Command-line entry point: gen-data, train, eval, experiment, suite.

Exit status: 0 on success, 1 on usage/config errors, 2 when the pipeline fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .classifier import save_bank
from .data import Dataset, write_dataset
from .encoder import load_checkpoint, save_checkpoint
from .exceptions import CDTripletError, ConfigError
from .experiments import (ExperimentConfig, StageError, _stage, dumps_report, evaluate, load_domains,
                          prepare_splits, run_experiment, run_suite)
from .sampler import MODES
from .training import train

USAGE_ERROR = 1
PIPELINE_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, report=True):
    p.add_argument("--config", type=Path, help="JSON experiment config; flags below override it")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", help="dataset directory (manifest.csv + PGM); default: generate synthetic data")
    p.add_argument("--epochs", type=int)
    p.add_argument("--positive-source", choices=("target", "source"))
    if report:
        p.add_argument("--out", type=Path, help="write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdtriplet", description="Cross-domain triplet-loss defect classification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write the synthetic two-domain dataset to a directory")
    _common(p, report=False)
    p.add_argument("--dir", type=Path, required=True)

    p = sub.add_parser("train", help="train an encoder and save a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("eval", help="classify the target test split with a saved checkpoint")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--bank-out", type=Path, help="also save the reference bank")

    p = sub.add_parser("experiment", help="full pipeline: data, train, bank, classify")
    _common(p)
    p.add_argument("--checkpoint", type=Path, help="also save the trained checkpoint")
    p.add_argument("--bank-out", type=Path)

    p = sub.add_parser("suite", help="run several modes over several seeds")
    _common(p)
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma separated, e.g. 0,1,2")
    p.add_argument("--modes", default=",".join(MODES))
    return parser


def load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config file not found: {args.config}")
        try:
            raw = json.loads(args.config.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
    try:
        cfg = ExperimentConfig.from_dict(raw)
        changes = {}
        if args.mode is not None:
            changes["mode"] = args.mode
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.data is not None:
            changes["data_dir"] = args.data
        if args.positive_source is not None:
            changes["positive_source"] = args.positive_source
        if args.epochs is not None:
            changes["train"] = cfg.train.__class__.from_dict({**cfg.train.to_dict(), "epochs": args.epochs})
        return cfg.replace(**changes) if changes else cfg
    except (ConfigError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc


def format_table(report: dict) -> str:
    c, r = report["counts"], report["rates"]

    def pct(v):
        return "  n/a" if v is None else f"{100 * v:5.1f}%"

    def num(v):
        return "n/a" if v is None else f"{v:.3f}"

    lines = [f"mode={report['mode']} seed={report['seed']} loss={report['loss_variant']}",
             "true \\ pred    noDefect        defect",
             f"noDefect   {c['tp']:4d} {pct(r['tp'])}  {c['fn']:4d} {pct(r['fn'])}",
             f"defect     {c['fp']:4d} {pct(r['fp'])}  {c['tn']:4d} {pct(r['tn'])}",
             f"precision {num(report['precision'])}  recall {num(report['recall'])}"]
    return "\n".join(lines)


def format_suite(summary: dict) -> str:
    lines = ["mode      FP mean   [min, max]       TP mean"]
    for mode, stats in summary["per_mode"].items():
        fp, tp = stats["fp"], stats["tp"]
        lines.append(f"{mode:8s}  {fp['mean']:.3f}    [{fp['min']:.3f}, {fp['max']:.3f}]   {tp['mean']:.3f}")
    lines.append(f"FP ordering ours < bench1 < bench2 on means: {summary['fp_ordering_holds']}")
    return "\n".join(lines)


def _write_json(path: Path | None, obj: dict):
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_report(obj) + "\n", encoding="utf-8")


def _parse_list(text: str, cast, what: str):
    try:
        items = [cast(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad {what} list {text!r}") from exc
    if not items:
        raise UsageError(f"empty {what} list")
    return items


def cmd_gen_data(args, cfg: ExperimentConfig):
    source, target = _stage("data", cfg.data.generate)
    _stage("write", write_dataset, Dataset.concat(source, target), args.dir)
    print(f"wrote {len(source) + len(target)} images to {args.dir}")


def cmd_train(args, cfg: ExperimentConfig):
    source, target = _stage("data", load_domains, cfg)
    splits = _stage("split", prepare_splits, cfg, source, target)
    model, report = _stage("train", train, splits.source_train, splits.target_train, cfg.encoder, cfg.train)
    _stage("save", save_checkpoint, model, args.checkpoint)
    print(f"trained {report.epochs} epochs in {report.wall_time_s:.1f}s, final loss {report.loss_history[-1]:.5f}")
    _write_json(args.out, {**report.to_json(), "mode": cfg.mode, "checkpoint": str(args.checkpoint)})


def _finish(args, result):
    if getattr(args, "bank_out", None) is not None:
        _stage("save", save_bank, result.bank, args.bank_out)
    print(format_table(result.report))
    _write_json(args.out, result.report)


def cmd_eval(args, cfg: ExperimentConfig):
    start = time.perf_counter()
    model = _stage("load", load_checkpoint, args.checkpoint)
    source, target = _stage("data", load_domains, cfg)
    splits = _stage("split", prepare_splits, cfg, source, target)
    result = evaluate(cfg, model, splits)
    result.report["runtime_s"] = time.perf_counter() - start
    _finish(args, result)


def cmd_experiment(args, cfg: ExperimentConfig):
    result = run_experiment(cfg)
    if args.checkpoint is not None:
        _stage("save", save_checkpoint, result.model, args.checkpoint)
    _finish(args, result)


def cmd_suite(args, cfg: ExperimentConfig):
    seeds = _parse_list(args.seeds, int, "seed")
    modes = _parse_list(args.modes, str, "mode")
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise UsageError(f"unknown modes {bad}; choose from {MODES}")
    summary = run_suite(cfg, seeds, modes)
    print(format_suite(summary))
    _write_json(args.out, summary)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "experiment": cmd_experiment, "suite": cmd_suite}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (StageError, CDTripletError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PIPELINE_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
