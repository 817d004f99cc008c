# affectdan command line interface.
#
#   synth          write the synthetic expression corpus
#   train          train one model from a run config
#   gradcheck      finite-difference suites for the engine and the losses
#   predict        checkpoint + manifest -> prediction JSONL
#   eval           prediction JSONL + manifest -> score report
#   ensemble-eval  predict with several checkpoints, soft-vote, score
#   report         metrics log / score reports -> static HTML
#
# Exit codes: 0 success, 1 operational failure (JSON error on stderr), 2 usage.

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .data.loader import open_image_set
from .data.records import load_manifest
from .data.synth import synth_generate
from .diffcore import set_debug
from .diffcore.gradcheck import all_passed, run_diffcore_suite
from .errors import AffectDanError, ConfigError
from .evaluation import (EnsembleConfig, EnsembleSpec, evaluate, predict, read_predictions, render_report,
                         soft_vote, train_ensemble, write_predictions)
from .model.checkpoint import read_checkpoint_config
from .model.config import Task
from .model.network import DanModel
from .objectives.suite import run_objectives_suite
from .training import METRICS_FILENAME, load_run_config, train
from .training.trainer import BEST_CHECKPOINT
from .utils.logging_setup import configure_logging
from .utils.resource_loader import load_config

console = Console()
logger = logging.getLogger("affectdan.cli")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="Run config file (YAML or JSON).")
    common.add_argument("--seed", type=int, default=None, help="Override every seed in the run config.")
    common.add_argument("--out", type=str, default=None, help="Output file or directory.")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="affectdan", description="Multi-head attention affect recognition.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Generate the synthetic corpus.")
    p.add_argument("--per-class", type=int, default=None)
    p.add_argument("--image-size", type=int, default=None)

    p = sub.add_parser("train", parents=[common], help="Train a model.")
    p.add_argument("--train-manifest", type=str, nargs="+", default=None,
                   help="One or more manifests; several are merged per task.")
    p.add_argument("--val-manifest", type=str, default=None)
    p.add_argument("--task", choices=[t.value for t in Task], default=None)
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("gradcheck", parents=[common], help="Run the finite-difference gradient suites.")
    p.add_argument("--instances", type=int, default=20)

    p = sub.add_parser("predict", parents=[common], help="Predict a manifest with a checkpoint.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=[t.value for t in Task], default=None)
    p.add_argument("--batch-size", type=int, default=64)

    p = sub.add_parser("eval", parents=[common], help="Score predictions against a manifest.")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--task", choices=[t.value for t in Task], required=True)
    p.add_argument("--mode", choices=["concat", "per_video"], default="concat")

    p = sub.add_parser("ensemble-eval", parents=[common], help="Soft-vote several checkpoints and score them.")
    p.add_argument("--checkpoints", nargs="+", default=None)
    p.add_argument("--train", action="store_true", help="Train the members from the run config first.")
    p.add_argument("--manifest", type=str, default=None, help="Defaults to data.val_manifest.")
    p.add_argument("--weights", type=float, nargs="+", default=None)
    p.add_argument("--task", choices=[t.value for t in Task], default=None)
    p.add_argument("--mode", choices=["concat", "per_video"], default="concat")

    p = sub.add_parser("report", parents=[common], help="Render metrics and scores into HTML.")
    p.add_argument("--metrics", type=str, default=None, help="metrics.jsonl or a run directory.")
    p.add_argument("--scores", nargs="*", default=[])
    return parser


def _print_error(error: dict) -> None:
    sys.stderr.write(json.dumps(error) + "\n")


def cmd_synth(args, run) -> int:
    overrides = {"per_class": args.per_class, "image_size": args.image_size}
    spec = replace(run.synth, **{k: v for k, v in overrides.items() if v is not None})
    result = synth_generate(spec, args.out or "data/synth", progress=run.train.progress)
    console.print(Panel(f"{len(result.records)} images ({len(result.train)} train / {len(result.val)} val)\n"
                        f"manifest: {result.manifest_path}", title="[green]synth[/green]"))
    return EXIT_OK


def cmd_train(args, run) -> int:
    config, data = run.train, run.data
    if args.task:
        config = replace(config, model=replace(config.model, task=Task.parse(args.task)))
    if args.epochs is not None:
        config = replace(config, epochs=args.epochs)
    train_manifest = args.train_manifest or data.train_manifest
    val_manifest = args.val_manifest or data.val_manifest
    if not train_manifest:
        raise ConfigError("no training manifest: pass --train-manifest or set data.train_manifest")
    out_dir = Path(args.out or "runs/train")
    task, size = config.model.task, config.model.input_size
    train_set = open_image_set(train_manifest, data, task, size, config.seed, augment_train=True,
                               offline_dir=out_dir / "augmented")
    val_set = open_image_set(val_manifest, data, task, size, config.seed) if val_manifest else None
    state = train(DanModel(config.model), train_set, config, val_set, out_dir, balanced=data.balanced)

    table = Table(title=f"train ({task.value})")
    for col in ("epoch", "split", "loss", "metric", "ms"):
        table.add_column(col, justify="right")
    for e in state.history:
        table.add_row(str(e.epoch), e.split, f"{e.loss:.5f}", f"{e.metric_value:.4f}", f"{e.wall_ms:.0f}")
    console.print(table)
    if state.checkpoints:
        console.print(f"best checkpoint: {out_dir / BEST_CHECKPOINT} (epoch {state.best_epoch})")
    return EXIT_OK


def cmd_gradcheck(args, run) -> int:
    seed = args.seed if args.seed is not None else 0
    results = (run_diffcore_suite(args.instances, seed, progress=logger.debug)
               + run_objectives_suite(args.instances, seed, progress=logger.debug))
    table = Table(title="gradient check")
    table.add_column("case")
    table.add_column("instances", justify="right")
    table.add_column("max rel err", justify="right")
    table.add_column("pass")
    for r in results:
        table.add_row(r.name, str(r.instances), f"{r.max_rel_err:.2e}", "[green]yes[/green]" if r.passed else "[red]no[/red]")
    console.print(table)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps([r.to_dict() for r in results], indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if all_passed(results) else EXIT_FAILURE


def cmd_predict(args, run) -> int:
    summary = predict(args.checkpoint, args.manifest, args.out or "predictions.jsonl", task=args.task,
                      image_root=run.data.image_root, batch_size=args.batch_size, workers=run.data.workers,
                      progress=run.train.progress)
    console.print(Panel(f"{summary.total} items, {summary.failed} failed\n-> {summary.path}",
                        title="[green]predict[/green]" if summary.ok else "[yellow]predict[/yellow]"))
    if not summary.ok:
        _print_error({"error": "predict_failures", "message": f"{summary.failed} item(s) failed",
                      **summary.to_dict()})
        return EXIT_FAILURE
    return EXIT_OK


def _score_table(title: str, rows: list[tuple[str, float]]) -> Table:
    table = Table(title=title)
    table.add_column("name")
    table.add_column("score", justify="right")
    for name, score in rows:
        table.add_row(name, f"{score:.4f}")
    return table


def cmd_eval(args, run, raw_config: dict) -> int:
    report = evaluate(read_predictions(args.predictions), load_manifest(args.manifest), args.task, args.mode,
                      config={"task": args.task, "mode": args.mode, "run": raw_config})
    path = report.write(args.out or "score.json")
    console.print(_score_table(f"{report.task.value} ({report.mode}) -> {path}",
                               [("overall", report.score)] + list(report.breakdown.items())))
    return EXIT_OK


def cmd_ensemble_eval(args, run, raw_config: dict) -> int:
    out_dir = Path(args.out or "runs/ensemble")
    ensemble = EnsembleConfig.from_dict(run.ensemble)
    weights = args.weights
    if args.train:
        checkpoints = train_ensemble(run, out_dir, ensemble, progress=run.train.progress)
        weights = weights if weights is not None else ensemble.weights
    elif args.checkpoints:
        checkpoints = [Path(c) for c in args.checkpoints]
    else:
        raise ConfigError("ensemble-eval needs --checkpoints or --train")
    task = Task.parse(args.task) if args.task else read_checkpoint_config(checkpoints[0]).task
    spec = EnsembleSpec(checkpoints, weights, task)
    manifest = args.manifest or run.data.val_manifest
    if not manifest:
        raise ConfigError("no evaluation manifest: pass --manifest or set data.val_manifest")
    truth = load_manifest(manifest)
    hash_config = {"task": spec.task.value, "mode": args.mode, "weights": spec.weights, "run": raw_config}

    members, rows, member_scores = [], [], []
    for i, checkpoint in enumerate(spec.checkpoints):
        summary = predict(checkpoint, manifest, out_dir / f"member_{i}.jsonl", task=spec.task,
                          image_root=run.data.image_root, workers=run.data.workers)
        score = evaluate(summary.records, truth, spec.task, args.mode, hash_config).score
        members.append(summary.records)
        rows.append((f"member {i}: {checkpoint}", score))
        member_scores.append({"checkpoint": checkpoint, "score": score})

    voted = soft_vote(members, spec.weights)
    write_predictions(voted, out_dir / "ensemble.jsonl")
    report = evaluate(voted, truth, spec.task, args.mode, hash_config)
    report.extra["members"] = member_scores
    report.extra["weights"] = spec.weights
    path = report.write(out_dir / "score.json")
    console.print(_score_table(f"soft-vote ensemble ({spec.task.value}, {args.mode}) -> {path}",
                               rows + [("ensemble", report.score)]))
    return EXIT_OK


def cmd_report(args, run) -> int:
    metrics = args.metrics
    if metrics is not None and Path(metrics).is_dir():
        metrics = Path(metrics) / METRICS_FILENAME
    if metrics is None and not args.scores:
        raise ConfigError("report needs --metrics and/or --scores")
    path = render_report(metrics, args.out or "report.html", args.scores)
    console.print(f"report: {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    configure_logging()
    try:
        raw_config = load_config(args.config)
        run = load_run_config(args.config, args.seed)
        configure_logging(run.logging)
        if run.logging.get("debug"):
            set_debug(True)
        if args.command == "synth":
            return cmd_synth(args, run)
        if args.command == "train":
            return cmd_train(args, run)
        if args.command == "gradcheck":
            return cmd_gradcheck(args, run)
        if args.command == "predict":
            return cmd_predict(args, run)
        if args.command == "eval":
            return cmd_eval(args, run, raw_config)
        if args.command == "ensemble-eval":
            return cmd_ensemble_eval(args, run, raw_config)
        return cmd_report(args, run)
    except AffectDanError as e:
        logger.debug("%s failed", args.command, exc_info=True)
        _print_error(e.to_dict())
        return EXIT_FAILURE
    except OSError as e:
        logger.debug("%s failed", args.command, exc_info=True)
        _print_error({"error": "io_error", "message": str(e)})
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
