"""Experiment report files and summary tables.

A report file is JSON with four top-level keys::

    {
      "toolkit_version": "0.1.0",
      "command": "sweep",            # or "train" / "eval"
      "config": {...},               # echo of the run configuration
      "payload": {...},              # SweepReport / TrainRecord / eval result
      "metadata": {"wall_clock_seconds": 12.3}
    }

Only ``metadata`` varies between identical runs.
"""
from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from . import __version__
from .errors import FormatError

_ORDER = ("NN4EOv1", "HQNN4EOv1", "NN4EOv2", "HQNN4EOv2", "NN4EOv3", "HQNN4EOv3", "ViT", "HQViT")


def experiment_report(command: str, config: dict, payload: dict, seconds: float) -> dict:
    return {
        "toolkit_version": __version__,
        "command": command,
        "config": config,
        "payload": payload,
        "metadata": {"wall_clock_seconds": round(seconds, 3)},
    }


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class SummaryRow:
    model: str
    n_reports: int
    mean_acc: float
    mean_variance: float
    mean_best_epoch: float


def _row_source(path, doc) -> tuple[str, float, float, float]:
    try:
        payload = doc["payload"]
        command = doc["command"]
        if command == "sweep":
            return payload["model"], payload["mean_acc"], payload["variance"], statistics.fmean(payload["best_epochs"])
        if command == "train":
            model = doc["config"]["model_name"]
            return model, payload["best_val_accuracy"], 0.0, float(payload["best_epoch"])
    except (KeyError, TypeError, statistics.StatisticsError) as exc:
        raise FormatError(f"{path}: missing or invalid field ({exc})") from exc
    raise FormatError(f"{path}: command {command!r} has no summary row")


def load_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"{path}: cannot read report ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def summarize(paths: Iterable) -> list[SummaryRow]:
    """One row per model: means over its reports of mean accuracy, variance and k*."""
    grouped: dict[str, list[tuple[float, float, float]]] = {}
    for path in paths:
        name, acc, var, k = _row_source(path, load_report(path))
        grouped.setdefault(name, []).append((acc, var, k))
    rank = {m: i for i, m in enumerate(_ORDER)}
    rows = []
    for name in sorted(grouped, key=lambda m: (rank.get(m, len(rank)), m)):
        vals = grouped[name]
        rows.append(
            SummaryRow(
                name,
                len(vals),
                statistics.fmean(v[0] for v in vals),
                statistics.fmean(v[1] for v in vals),
                statistics.fmean(v[2] for v in vals),
            )
        )
    return rows


def rows_to_csv(rows: list[SummaryRow]) -> str:
    lines = ["model,n_reports,mean_acc,mean_variance,mean_best_epoch"]
    lines += [f"{r.model},{r.n_reports},{r.mean_acc!r},{r.mean_variance!r},{r.mean_best_epoch!r}" for r in rows]
    return "\n".join(lines) + "\n"


def rows_to_text(rows: list[SummaryRow]) -> str:
    header = f"{'Model':<11} {'runs':>4} {'mean Acc':>9} {'sigma^2':>9} {'mean k*':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.model:<11} {r.n_reports:>4} {r.mean_acc:>9.2f} {r.mean_variance:>9.2f} {r.mean_best_epoch:>8.2f}")
    paired = _paired_table(rows)
    if paired:
        lines += ["", paired]
    return "\n".join(lines) + "\n"


def _paired_table(rows: list[SummaryRow]) -> str:
    """Traditional vs quantum side by side, for families where both are present."""
    by_name = {r.model: r for r in rows}
    pairs = [(c, f"HQ{c}") for c in ("NN4EOv1", "NN4EOv2", "NN4EOv3", "ViT") if c in by_name and f"HQ{c}" in by_name]
    if not pairs:
        return ""
    header = f"{'Models':<22} | {'trad. Acc':>9} {'sigma^2':>8} | {'quant. Acc':>10} {'sigma^2':>8}"
    lines = [header, "-" * len(header)]
    for c, q in pairs:
        rc, rq = by_name[c], by_name[q]
        lines.append(
            f"{c + ' / ' + q:<22} | {rc.mean_acc:>9.2f} {rc.mean_variance:>8.2f} | {rq.mean_acc:>10.2f} {rq.mean_variance:>8.2f}"
        )
    return "\n".join(lines)


def sweep_table(report) -> str:
    """Per-seed rows followed by the mean / variance footer."""
    lines = [f"{report.model}  classes {report.pair[0]},{report.pair[1]}", f"{'seed':>8} {'Acc':>8} {'k*':>4}"]
    for s, a, k in zip(report.seeds, report.accuracies, report.best_epochs):
        lines.append(f"{s:>8} {a:>8.2f} {k:>4}")
    lines.append(f"mean Acc {report.mean_acc:.2f}  sigma^2(Acc) {report.variance:.4f}  mean k* {statistics.fmean(report.best_epochs):.2f}")
    return "\n".join(lines) + "\n"
