"""Datasets: IDX loading, synthetic digits, disjoint task splits."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as _rng
from .errors import ConsistencyError, ContractError, FormatError, ShapeError
from .network import HeadMask

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[0],):
            raise ShapeError(f"inputs {self.inputs.shape} and labels {self.labels.shape} do not pair up")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError(f"labels must lie in [0, {self.num_classes})")
        if not np.isfinite(self.inputs).all():
            raise ContractError("inputs contain non-finite values")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.inputs[index], self.labels[index], self.num_classes)


@dataclass
class TaskSpec:
    task_id: int
    active_classes: tuple[int, ...]
    train: LabeledDataset
    test: LabeledDataset

    @property
    def mask(self) -> HeadMask:
        return HeadMask(self.active_classes)


def _read(path: str | Path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as fh:
            return fh.read()
    except (OSError, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _parse_idx(blob: bytes, magic: int, ndim: int, name: str) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise FormatError(f"{name}: truncated header ({len(blob)} bytes)")
    (found,) = struct.unpack(">I", blob[:4])
    if found != magic:
        raise FormatError(f"{name}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    if len(blob) - header != expected:
        raise FormatError(f"{name}: payload is {len(blob) - header} bytes, header promises {expected}")
    return np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)


def parse_idx_images(blob: bytes) -> np.ndarray:
    """Images as ``(N, rows*cols)`` floats in [0, 1]."""
    raw = _parse_idx(blob, IDX_IMAGES_MAGIC, 3, "images")
    return raw.reshape(raw.shape[0], -1).astype(np.float64) / 255.0


def parse_idx_labels(blob: bytes) -> np.ndarray:
    return _parse_idx(blob, IDX_LABELS_MAGIC, 1, "labels").astype(np.int64)


def load_idx(images_path: str | Path, labels_path: str | Path, num_classes: int = 10) -> LabeledDataset:
    """Read an IDX image/label file pair (optionally gzipped)."""
    images = parse_idx_images(_read(images_path))
    labels = parse_idx_labels(_read(labels_path))
    if len(images) != len(labels):
        raise ConsistencyError(f"{len(images)} images but {len(labels)} labels")
    if len(labels) == 0:
        raise FormatError("IDX files contain no samples")
    if labels.max() >= num_classes:
        raise ConsistencyError(f"label {labels.max()} >= num_classes {num_classes}")
    return LabeledDataset(images, labels, num_classes)


# Synthetic digits. Classes come in pairs {2p, 2p+1}, matching the default
# two-class task split. Every coordinate sits near 0.5 with small clipped
# Gaussian noise, except:
#
#   * each pair owns one "pair axis". On it, class 2p sits at 0.5 + PAIR_GAP
#     and 2p+1 at 0.5 - PAIR_GAP (plus the clipped noise). Samples of every
#     other pair see a random offset of +-CROSS_OFFSET on that axis, fixed
#     per (pair, axis), plus wide Gaussian jitter CROSS_SD;
#   * each pair owns one "code" coordinate, raised to 0.5 + CODE while all
#     other code coordinates drop to 0.5 - CODE.
#
# Everything is clipped to [0, 1]. The pair axes are shared by all tasks, so
# a network trained on later pairs keeps moving the features an earlier pair
# relies on; that is what makes plain SGD forget on this data.
#
# Separability: inside a pair the classes are split by the pair axis with a
# gap of 2 * (PAIR_GAP - NOISE_CLIP) = 0.18. With dim >= 2 * n_pairs, the
# linear scores  s_c = code_p(c) + sign_c * (axis_p(c) - 0.5)  classify every
# sample correctly with a margin of at least 0.18 over the runner-up class.
# With fewer dimensions the code coordinates are dropped (and pair axes are
# reused when dim < n_pairs); only the within-pair split is then guaranteed.
PAIR_GAP = 0.15
NOISE_SD = 0.03
NOISE_CLIP = 0.06
CROSS_OFFSET = 0.65
CROSS_SD = 0.15
CODE = 0.4


def synthetic_digits(num_classes: int, per_class: int, dim: int, seed: int) -> LabeledDataset:
    """Seeded synthetic class clusters, ordered class by class (see layout above)."""
    if min(num_classes, per_class, dim) <= 0:
        raise ContractError("num_classes, per_class and dim must all be positive")
    gen = _rng.stream(seed, _rng.DATA)
    n_pairs = (num_classes + 1) // 2
    perm = gen.permutation(dim)
    axes = perm[np.arange(n_pairs) % dim]
    codes = perm[n_pairs:2 * n_pairs] if dim >= 2 * n_pairs else perm[:0]
    offsets = CROSS_OFFSET * gen.choice([-1.0, 1.0], size=(n_pairs, n_pairs))
    blocks = []
    for c in range(num_classes):
        p, sign = divmod(c, 2)
        sign = 1.0 - 2.0 * sign
        x = 0.5 + np.clip(gen.normal(0.0, NOISE_SD, (per_class, dim)), -NOISE_CLIP, NOISE_CLIP)
        x[:, axes] += offsets[p] + gen.normal(0.0, CROSS_SD, (per_class, n_pairs))
        x[:, axes[p]] = 0.5 + sign * PAIR_GAP + np.clip(gen.normal(0.0, NOISE_SD, per_class), -NOISE_CLIP, NOISE_CLIP)
        if codes.size:
            x[:, codes] -= CODE
            x[:, codes[p]] += 2.0 * CODE
        blocks.append(np.clip(x, 0.0, 1.0))
    labels = np.repeat(np.arange(num_classes), per_class)
    return LabeledDataset(np.concatenate(blocks), labels, num_classes)


def synthetic_split(
    num_classes: int = 10,
    train_per_class: int = 200,
    test_per_class: int = 50,
    dim: int = 16,
    seed: int = 0,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Train/test pair drawn from the same clusters: the first
    ``train_per_class`` samples of each class train, the rest test."""
    per = train_per_class + test_per_class
    full = synthetic_digits(num_classes, per, dim, seed)
    within = np.tile(np.arange(per), num_classes)
    return full.subset(within < train_per_class), full.subset(within >= train_per_class)


def split_tasks(
    train: LabeledDataset, classes_per_task: int, test: LabeledDataset | None = None
) -> list[TaskSpec]:
    """Consecutive class blocks ``[0, c), [c, 2c), ...`` as disjoint tasks.

    Without a ``test`` set each task is evaluated on its own training data.
    """
    n = train.num_classes
    test = train if test is None else test
    if test.num_classes != n:
        raise ContractError("train and test disagree on num_classes")
    if classes_per_task <= 0 or n % classes_per_task:
        raise ContractError(f"{n} classes cannot be split into blocks of {classes_per_task}")
    tasks = []
    for t, lo in enumerate(range(0, n, classes_per_task)):
        classes = tuple(range(lo, lo + classes_per_task))
        tasks.append(TaskSpec(
            task_id=t,
            active_classes=classes,
            train=train.subset(np.isin(train.labels, classes)),
            test=test.subset(np.isin(test.labels, classes)),
        ))
    return tasks
