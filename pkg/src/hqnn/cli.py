"""Command-line entry point: ``hqnn {train,eval,sweep,synth,report}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import dataio
from .checkpoint import load_checkpoint
from .errors import HQNNError, ValidationError
from .models import FAMILIES, ModelSpec
from .qsim import QuantumBackend
from .report import experiment_report, rows_to_csv, rows_to_text, summarize, sweep_table, write_json
from .training import DEFAULT_SEEDS, TrainConfig, evaluate_accuracy, seed_sweep, train

log = logging.getLogger("hqnn")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--manifest", type=Path, help="CSV manifest with header 'path,label'")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N generated images per class instead of a manifest")
    p.add_argument("--classes", default="0,1", help="class pair 'a,b' with a < b (default 0,1)")
    p.add_argument("--split-seed", type=int, help="pin the train/validation split seed (default: the run seed)")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="nn4eo-v1", choices=[f.replace("_", "-") for f in FAMILIES])
    p.add_argument("--quantum", action="store_true", help="single-qubit head instead of sigmoid")
    p.add_argument("--channels", type=_int_list, help="conv output channels per block, e.g. 6,12")
    p.add_argument("--padding", choices=("same", "valid"), default="same")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hqnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model on one class pair")
    _add_model_flags(p)
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=Path("hqnn_run"))

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=0, help="split seed used to pick the validation part")
    p.add_argument("--subset", choices=("val", "train", "all"), default="val")
    p.add_argument("--backend", choices=("analytic", "sampled"), default="analytic")
    p.add_argument("--shots", type=int, default=1024)
    p.add_argument("--shot-seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=None, help="write the evaluation JSON here")

    p = sub.add_parser("sweep", help="train once per seed and report accuracy variance")
    _add_model_flags(p)
    _add_data_flags(p)
    p.add_argument("--seeds", type=_int_list, default=list(DEFAULT_SEEDS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", type=Path, default=Path("hqnn_sweep"))
    p.add_argument("--save-checkpoints", action="store_true")

    p = sub.add_parser("synth", help="write the synthetic dataset as PNGs plus a manifest")
    p.add_argument("--count", type=int, default=50, help="images per class")
    p.add_argument("--classes", default="0,1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("report", help="aggregate stored report JSON files into summary tables")
    p.add_argument("reports", nargs="+", type=Path)
    p.add_argument("--output", type=Path, default=None, help="directory for summary.csv and summary.txt")
    return parser


# ---------------------------------------------------------------------------
# config assembly (usage errors only, nothing executed yet)
# ---------------------------------------------------------------------------
def _pair(args) -> dataio.PairTask:
    try:
        return dataio.PairTask.parse(args.classes)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None


def _train_config(args, seed: int) -> TrainConfig:
    try:
        spec = ModelSpec(
            args.model,
            quantum_head=args.quantum,
            conv_channels=tuple(args.channels) if args.channels else None,
            padding=args.padding,
        )
        return TrainConfig(spec, _pair(args), seed=seed, lr=args.lr, epochs=args.epochs, split_seed=args.split_seed)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None


def _check_data_flags(args) -> None:
    if args.manifest is None and args.synthetic is None:
        raise UsageError("one of --manifest or --synthetic is required")
    if args.synthetic is not None and args.synthetic < 10:
        raise UsageError("--synthetic needs at least 10 images per class")


def _load_task(args, pair: dataio.PairTask) -> tuple[list[dataio.Sample], str]:
    if args.synthetic is not None:
        samples = dataio.gen_synthetic(args.synthetic, seed=0, classes=(pair.class_a, pair.class_b))
        source = f"synthetic:{args.synthetic}"
    else:
        samples = dataio.load_samples(args.manifest)
        source = str(args.manifest)
    return dataio.build_pair_task(samples, pair), source


def _config_echo(config: TrainConfig, source: str) -> dict:
    d = config.to_dict()
    d["model_name"] = config.model.display_name
    d["data"] = source
    return d


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def run_train(args) -> int:
    config = _train_config(args, args.seed)
    _check_data_flags(args)
    t0 = time.perf_counter()
    samples, source = _load_task(args, config.pair)
    split = dataio.split_train_val(samples, seed=config.effective_split_seed)
    args.output.mkdir(parents=True, exist_ok=True)
    ckpt = args.output / "best.ckpt"
    record = train(config, split, ckpt)
    report = experiment_report("train", _config_echo(config, source), record.to_dict(), time.perf_counter() - t0)
    write_json(args.output / "record.json", report)
    print(f"{config.model.display_name} classes {config.pair}: best val Acc {record.best_val_accuracy:.2f}% at epoch {record.best_epoch}")
    return 0


def run_eval(args) -> int:
    pair = _pair(args)
    _check_data_flags(args)
    try:
        backend = QuantumBackend(args.backend, args.shots, args.shot_seed)
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    model = load_checkpoint(args.checkpoint)
    samples, source = _load_task(args, pair)
    if args.subset != "all":
        split = dataio.split_train_val(samples, seed=args.seed if args.split_seed is None else args.split_seed)
        samples = split.val if args.subset == "val" else split.train
    acc = evaluate_accuracy(model, samples, backend)
    print(f"{model.spec.display_name} classes {pair} ({args.subset}, {args.backend}): Acc {acc:.2f}%")
    if args.output is not None:
        config = {
            "checkpoint": str(args.checkpoint),
            "model": model.spec.to_dict(),
            "model_name": model.spec.display_name,
            "pair": [pair.class_a, pair.class_b],
            "data": source,
            "subset": args.subset,
            "backend": {"mode": backend.mode, "shots": backend.shots, "rng_seed": backend.rng_seed},
        }
        payload = {"accuracy": acc, "n_samples": len(samples)}
        write_json(args.output, experiment_report("eval", config, payload, time.perf_counter() - t0))
    return 0


def run_sweep(args) -> int:
    config = _train_config(args, 0)
    if len(set(args.seeds)) != len(args.seeds):
        raise UsageError(f"duplicate seeds in --seeds {','.join(map(str, args.seeds))}")
    if not args.seeds:
        raise UsageError("--seeds is empty")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    _check_data_flags(args)
    t0 = time.perf_counter()
    samples, source = _load_task(args, config.pair)
    args.output.mkdir(parents=True, exist_ok=True)
    ckpt_dir = args.output if args.save_checkpoints else None
    report = seed_sweep(config, samples, args.seeds, jobs=args.jobs, checkpoint_dir=ckpt_dir)
    echo = _config_echo(config, source)
    echo.pop("seed")
    echo["seeds"] = args.seeds
    write_json(args.output / "sweep.json", experiment_report("sweep", echo, report.to_dict(), time.perf_counter() - t0))
    (args.output / "sweep.csv").write_text(report.to_csv(), encoding="utf-8")
    print(sweep_table(report), end="")
    return 0


def run_synth(args) -> int:
    pair = _pair(args)
    if args.count < 10:
        raise UsageError("--count must be >= 10")
    args.output.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(dataio.gen_synthetic(args.count, args.seed, classes=(pair.class_a, pair.class_b))):
        name = f"img_{i:05d}_c{s.class_id}.png"
        dataio.encode_image_rgb(s.pixels, args.output / name)
        entries.append((name, s.class_id))
    dataio.write_manifest(args.output / "manifest.csv", entries)
    print(f"wrote {len(entries)} images and manifest.csv to {args.output}")
    return 0


def run_report(args) -> int:
    rows = summarize(args.reports)
    text = rows_to_text(rows)
    if args.output is not None:
        args.output.mkdir(parents=True, exist_ok=True)
        (args.output / "summary.csv").write_text(rows_to_csv(rows), encoding="utf-8")
        (args.output / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


COMMANDS = {"train": run_train, "eval": run_eval, "sweep": run_sweep, "synth": run_synth, "report": run_report}


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("HQNN_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    _setup_logging()
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hqnn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (HQNNError, OSError) as exc:
        print(f"hqnn {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
