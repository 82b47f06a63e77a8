"""Training loop, evaluation, and multi-seed stability sweeps."""
from __future__ import annotations

import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, zero_grad
from .checkpoint import save_checkpoint
from .dataio import PairTask, Sample, SplitDataset, split_train_val
from .errors import HQNNError, ValidationError
from .models import Model, ModelSpec, build_model, forward
from .qsim import ANALYTIC, QuantumBackend

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 12, 123, 1000, 1234, 10000, 12345, 100000, 123456, 1234567)
THRESHOLD = 0.5
_SHUFFLE_STREAM = 1


class TrainingError(HQNNError, RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    pair: PairTask = field(default_factory=lambda: PairTask(0, 1))
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 20
    batch_size: int = 1
    split_seed: int | None = None  # None: reuse ``seed``

    def __post_init__(self):
        if self.batch_size != 1:
            raise ValidationError(f"batch_size is fixed at 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")

    @property
    def effective_split_seed(self) -> int:
        return self.seed if self.split_seed is None else self.split_seed

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "pair": [self.pair.class_a, self.pair.class_b],
            "seed": self.seed,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "loss": "bce",
            "split_seed": self.split_seed,
        }


@dataclass
class TrainRecord:
    train_loss: list[float]
    val_accuracy: list[float]
    best_epoch: int
    best_val_accuracy: float
    checkpoint_path: str | None = None
    model: Model | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_accuracy": self.val_accuracy,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "checkpoint_path": self.checkpoint_path,
        }


@dataclass
class SweepReport:
    model: str
    pair: tuple[int, int]
    seeds: list[int]
    accuracies: list[float]
    best_epochs: list[int]
    mean_acc: float
    variance: float

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "pair": list(self.pair),
            "seeds": self.seeds,
            "accuracies": self.accuracies,
            "best_epochs": self.best_epochs,
            "mean_acc": self.mean_acc,
            "variance": self.variance,
            "mean_best_epoch": statistics.fmean(self.best_epochs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(
            d["model"], tuple(d["pair"]), list(d["seeds"]), list(d["accuracies"]),
            list(d["best_epochs"]), d["mean_acc"], d["variance"],
        )

    def to_csv(self) -> str:
        rows = ["seed,accuracy,best_epoch"]
        rows += [f"{s},{a!r},{k}" for s, a, k in zip(self.seeds, self.accuracies, self.best_epochs)]
        return "\n".join(rows) + "\n"


def variance_stats(acc: Sequence[float]) -> tuple[float, float]:
    """Mean and population (1/k) variance of per-run accuracies."""
    if len(acc) == 0:
        raise ValidationError("variance_stats needs at least one accuracy")
    return float(statistics.mean(acc)), float(statistics.pvariance(acc))


def predict(model: Model, pixels, backend: QuantumBackend = ANALYTIC, rng=None) -> float:
    return forward(model, Tensor(pixels), backend, rng).item()


def evaluate_accuracy(model: Model, samples: Sequence[Sample], backend: QuantumBackend = ANALYTIC) -> float:
    """Percentage of samples whose thresholded output (>= 0.5 means 1) equals the label."""
    if not samples:
        raise ValidationError("cannot evaluate on an empty sample list")
    rng = None if backend.analytic else backend.generator()
    correct = 0
    for s in samples:
        if s.label is None:
            raise ValidationError(f"sample {s.source_path or '?'} has no binary label")
        pred = 1 if predict(model, s.pixels, backend, rng) >= THRESHOLD else 0
        correct += pred == s.label
    return 100.0 * correct / len(samples)


def _snapshot(model: Model) -> dict[str, np.ndarray]:
    return {k: t.data.copy() for k, t in model.params.items()}


def train(
    config: TrainConfig,
    data: SplitDataset,
    checkpoint_path=None,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> TrainRecord:
    """Batch-size-1 Adam training with per-epoch validation and best-model tracking.

    The returned record's ``model`` holds the best-validation parameters.
    """
    if not data.train or not data.val:
        raise ValidationError("training needs non-empty train and validation sets")
    for s in (*data.train, *data.val):
        if s.label is None:
            raise ValidationError(f"sample {s.source_path or '?'} has no binary label; build the pair task first")

    model = build_model(config.model, config.seed)
    params = model.parameters()
    opt = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM])

    losses: list[float] = []
    accs: list[float] = []
    best_acc, best_epoch, best_state = -1.0, 0, None
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for step, i in enumerate(rng.permutation(len(data.train))):
            sample = data.train[i]
            zero_grad(params)
            loss = ad.bce_loss(forward(model, Tensor(sample.pixels)), sample.label)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step} (sample {sample.source_path})")
            ad.backward(loss)
            adam_step(opt, params)
            total += value
        losses.append(total / len(data.train))
        acc = evaluate_accuracy(model, data.val)
        accs.append(acc)
        if acc > best_acc:
            best_acc, best_epoch, best_state = acc, epoch, _snapshot(model)
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path)
        log.info("epoch %d loss %.6f val_acc %.2f", epoch, losses[-1], acc)
        if on_epoch is not None:
            on_epoch(epoch, losses[-1], acc)

    best = build_model(config.model, config.seed)
    for k, t in best.params.items():
        t.data = best_state[k]
    return TrainRecord(losses, accs, best_epoch, best_acc, None if checkpoint_path is None else str(checkpoint_path), best)


def _sweep_run(args) -> tuple[float, int]:
    config, samples, ckpt = args
    split = split_train_val(samples, seed=config.effective_split_seed)
    record = train(config, split, ckpt)
    return record.best_val_accuracy, record.best_epoch


def seed_sweep(
    template: TrainConfig,
    samples: Sequence[Sample],
    seeds: Sequence[int] = DEFAULT_SEEDS,
    jobs: int = 1,
    checkpoint_dir=None,
) -> SweepReport:
    """Train once per seed on labelled ``samples`` and aggregate accuracy statistics.

    Each run re-splits the data with its own seed unless the template pins ``split_seed``.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValidationError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        dupes = sorted({s for s in seeds if seeds.count(s) > 1})
        raise ValidationError(f"duplicate seeds: {dupes}")
    jobs_args = []
    for s in seeds:
        ckpt = None if checkpoint_dir is None else Path(checkpoint_dir) / f"seed_{s}.ckpt"
        jobs_args.append((replace(template, seed=s), list(samples), ckpt))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_run, jobs_args))
    else:
        results = [_sweep_run(a) for a in jobs_args]
    accs = [r[0] for r in results]
    mean, var = variance_stats(accs)
    return SweepReport(
        template.model.display_name,
        (template.pair.class_a, template.pair.class_b),
        seeds,
        accs,
        [r[1] for r in results],
        mean,
        var,
    )
