"""Image datasets: CSV manifests of RGB PNGs, pairwise tasks, splits, synthetic data."""
from __future__ import annotations

import csv
import itertools
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import FormatError, ValidationError

IMAGE_SIZE = 64
N_CLASSES = 10
CLASS_NAMES = (
    "highway",
    "forest",
    "sea lake",
    "herbaceous vegetation",
    "river",
    "industrial",
    "residential",
    "pasture",
    "permanent crop",
    "annual crop",
)
VAL_FRACTION = 0.20
MIN_PER_CLASS = 5


class ManifestError(FormatError):
    pass


@dataclass(frozen=True)
class Sample:
    pixels: np.ndarray  # [3, 64, 64] in [0, 1]
    class_id: int
    source_path: str = ""
    label: int | None = None


@dataclass(frozen=True)
class PairTask:
    class_a: int
    class_b: int

    def __post_init__(self):
        for c in (self.class_a, self.class_b):
            if not 0 <= c < N_CLASSES:
                raise ValidationError(f"class {c} outside 0..{N_CLASSES - 1}")
        if self.class_a == self.class_b:
            raise ValidationError("classes must differ")
        if self.class_a > self.class_b:
            raise ValidationError(f"classes must be given in increasing order, got {self.class_a},{self.class_b}")

    def label_of(self, class_id: int) -> int:
        if class_id == self.class_a:
            return 0
        if class_id == self.class_b:
            return 1
        raise ValidationError(f"class {class_id} is not part of task {self}")

    def __str__(self) -> str:
        return f"{self.class_a},{self.class_b}"

    @classmethod
    def parse(cls, text: str) -> "PairTask":
        parts = text.split(",")
        if len(parts) != 2:
            raise ValidationError(f"expected a class pair 'a,b', got {text!r}")
        try:
            a, b = (int(s) for s in parts)
        except ValueError:
            raise ValidationError(f"class pair must be two integers, got {text!r}") from None
        return cls(a, b)


@dataclass(frozen=True)
class SplitDataset:
    train: list[Sample]
    val: list[Sample]
    split_seed: int


def load_manifest(path) -> list[tuple[Path, int]]:
    """Read a ``path,label`` CSV; relative paths resolve against the manifest's folder."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"{path}: manifest not found")
    base = path.parent
    entries = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["path", "label"]:
            raise ManifestError(f"{path}:1: header must be 'path,label', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ManifestError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            img, label = row[0].strip(), row[1].strip()
            if not img:
                raise ManifestError(f"{path}:{line}: empty image path")
            try:
                class_id = int(label)
            except ValueError:
                raise ManifestError(f"{path}:{line}: label {label!r} is not an integer") from None
            if not 0 <= class_id < N_CLASSES:
                raise ManifestError(f"{path}:{line}: label {class_id} outside 0..{N_CLASSES - 1}")
            p = Path(img)
            entries.append((p if p.is_absolute() else base / p, class_id))
    return entries


def write_manifest(path, entries: Iterable[tuple[str, int]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        for img, label in entries:
            writer.writerow([str(img), int(label)])


def decode_image_rgb(path) -> np.ndarray:
    """8-bit 64x64 RGB PNG -> float64 [3, 64, 64] scaled to [0, 1]."""
    try:
        with Image.open(path) as img:
            fmt, mode, size = img.format, img.mode, img.size
            if fmt != "PNG":
                raise FormatError(f"{path}: expected a PNG file, got {fmt}")
            if mode != "RGB":
                raise FormatError(f"{path}: expected 8-bit RGB color type, got mode {mode}")
            if size != (IMAGE_SIZE, IMAGE_SIZE):
                raise FormatError(f"{path}: expected {IMAGE_SIZE}x{IMAGE_SIZE} pixels, got {size[0]}x{size[1]}")
            arr = np.asarray(img, dtype=np.uint8)
    except OSError as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def encode_image_rgb(pixels: np.ndarray, path) -> None:
    """Write [3, H, W] values in [0, 1] as an 8-bit RGB PNG."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise FormatError(f"expected [3, H, W] pixels, got shape {pixels.shape}")
    data = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(data).save(path, format="PNG")


def load_samples(manifest) -> list[Sample]:
    return [Sample(decode_image_rgb(p), c, str(p)) for p, c in load_manifest(manifest)]


def build_pair_task(samples: Sequence[Sample], task: PairTask) -> list[Sample]:
    """Keep the two classes of ``task`` and label them 0 (class_a) / 1 (class_b)."""
    present = {s.class_id for s in samples}
    for c in (task.class_a, task.class_b):
        if c not in present:
            raise ValidationError(f"class {c} ({CLASS_NAMES[c]}) has no samples")
    return [replace(s, label=task.label_of(s.class_id)) for s in samples if s.class_id in (task.class_a, task.class_b)]


def enumerate_all_pairs(n_classes: int = N_CLASSES) -> list[PairTask]:
    return [PairTask(a, b) for a, b in itertools.combinations(range(n_classes), 2)]


def split_train_val(samples: Sequence[Sample], fraction: float = VAL_FRACTION, seed: int = 0) -> SplitDataset:
    """Stratified shuffle split; each class sends floor(fraction * n) samples to validation.

    Output lists keep the original sample order within each part.
    """
    by_class: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        by_class[s.class_id].append(i)
    for c, idx in by_class.items():
        if len(idx) < MIN_PER_CLASS:
            raise ValidationError(f"class {c} has {len(idx)} samples; at least {MIN_PER_CLASS} are needed to split")
    rng = np.random.default_rng(seed)
    val_idx: set[int] = set()
    for c in sorted(by_class):
        idx = np.array(by_class[c])
        n_val = int(np.floor(fraction * len(idx) + 1e-9))
        val_idx.update(int(i) for i in rng.permutation(idx)[:n_val])
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return SplitDataset(train, val, seed)


def _gradient_image(size: int) -> np.ndarray:
    ramp = np.linspace(0.0, 1.0, size)
    return np.broadcast_to(ramp, (3, size, size)).copy()


def _checkerboard_image(size: int, cell: int = 8) -> np.ndarray:
    ii, jj = np.indices((size, size))
    board = ((ii // cell + jj // cell) % 2).astype(np.float64)
    return np.broadcast_to(board, (3, size, size)).copy()


def gen_synthetic(n_per_class: int, seed: int, classes: tuple[int, int] = (0, 1), noise: float = 0.05) -> list[Sample]:
    """Two-class toy set: horizontal ramps vs. 8px checkerboards, plus Gaussian noise.

    Samples alternate class_a / class_b. Values are clipped to [0, 1].
    """
    if n_per_class < 10:
        raise ValidationError(f"n_per_class must be >= 10, got {n_per_class}")
    rng = np.random.default_rng(seed)
    templates = (_gradient_image(IMAGE_SIZE), _checkerboard_image(IMAGE_SIZE))
    samples = []
    for i in range(n_per_class):
        for k, template in enumerate(templates):
            pixels = np.clip(template + rng.normal(0.0, noise, template.shape), 0.0, 1.0)
            samples.append(Sample(pixels, classes[k], f"synthetic:{classes[k]}:{i}"))
    return samples
