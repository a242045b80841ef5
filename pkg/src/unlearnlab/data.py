"""Datasets, unlearning task partitions, and batch iteration.

A dataset is a dense float64 feature matrix with integer labels. An
unlearning task splits a train/test pair into the six views the engine
and the evaluation harness work with: the unlearning and remaining
portions of the training split, the corresponding test portions for
class tasks, and the fixed evaluation subsets used by the termination
checks.

All randomness flows through numpy Generators seeded from explicit
integers, so every split, batch order, and draw is reproducible.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    EmptyUnlearnSetError,
    ParseError,
    ValidationError,
)

# Largest evaluation subset used by the sample-task termination check.
EVAL_CAP = 500

# Purpose tags keep RNG streams for different jobs independent even
# when they share a base seed.
TAG_TRAIN_BATCHES = 1
TAG_UNLEARN_BATCHES = 2
TAG_REMAIN_SAMPLER = 3
TAG_TASK_SELECT = 4
TAG_EVAL_SUBSET = 5


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine transform fitted on a training split."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(features: np.ndarray) -> "Standardizer":
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        # Constant columns carry no information; leave them unscaled
        # instead of dividing by zero.
        std = np.where(std < 1e-8, 1.0, std)
        return Standardizer(mean=mean, std=std)

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.std


class Dataset:
    """Feature matrix plus labels for a fixed number of classes."""

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        num_classes: int,
        standardizer: Standardizer | None = None,
    ):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        problems = []
        if features.ndim != 2:
            problems.append("features must be a rank-2 array")
        elif features.shape[0] < 1:
            problems.append("dataset must contain at least one sample")
        if labels.ndim != 1 or (features.ndim == 2 and labels.shape[0] != features.shape[0]):
            problems.append("labels must be one per feature row")
        if num_classes < 2:
            problems.append("num_classes must be >= 2")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            problems.append(f"labels must lie in [0, {num_classes})")
        if features.size and not np.all(np.isfinite(features)):
            problems.append("features must be finite")
        if problems:
            raise ValidationError("invalid dataset: " + "; ".join(problems), problems)
        features = features.copy()
        labels = labels.copy()
        features.flags.writeable = False
        labels.flags.writeable = False
        self.features = features
        self.labels = labels
        self.num_classes = int(num_classes)
        self.standardizer = standardizer

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[indices],
            self.labels[indices],
            self.num_classes,
            standardizer=self.standardizer,
        )

    def class_indices(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == class_id)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


def standardize_pair(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    """Standardize both splits with statistics fitted on the train split."""
    t = Standardizer.fit(train.features)
    return (
        Dataset(t.apply(train.features), train.labels, train.num_classes, standardizer=t),
        Dataset(t.apply(test.features), test.labels, test.num_classes, standardizer=t),
    )


def _place_means(num_classes: int, dim: int, min_distance: float, rng) -> np.ndarray:
    """Class means with every pairwise distance >= min_distance.

    When the classes fit into the ambient dimension the means are scaled
    columns of a random orthogonal matrix, which meets the distance bound
    exactly. Otherwise fall back to rejection sampling with a growing
    radius, which terminates for any class count.
    """
    if num_classes <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        scale = min_distance * 1.15 / np.sqrt(2.0)
        return q[:, :num_classes].T * scale
    radius = min_distance * max(1.0, num_classes ** (1.0 / dim))
    means: list[np.ndarray] = []
    failures = 0
    while len(means) < num_classes:
        candidate = rng.standard_normal(dim) * radius
        if all(np.linalg.norm(candidate - m) >= min_distance for m in means):
            means.append(candidate)
            failures = 0
        else:
            failures += 1
            if failures > 200:
                radius *= 1.5
                failures = 0
    return np.stack(means)


def generate_synthetic(
    num_classes: int,
    dim: int,
    per_class_train: int,
    per_class_test: int,
    spread: float = 1.0,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Gaussian class clusters split into train and test.

    Each class is a unit-variance isotropic Gaussian around its own mean;
    means are placed deterministically from the seed with pairwise
    distance at least 4 * spread, so spread controls how separable the
    classes are. Train and test are drawn independently.
    """
    problems = []
    if num_classes < 2:
        problems.append("num_classes must be >= 2")
    if dim < 2:
        problems.append("dim must be >= 2")
    if per_class_train < 1 or per_class_test < 1:
        problems.append("per-class sample counts must be >= 1")
    if spread <= 0:
        problems.append("spread must be positive")
    if problems:
        raise ValidationError("invalid generator settings: " + "; ".join(problems), problems)

    rng = np.random.default_rng(seed)
    means = _place_means(num_classes, dim, 4.0 * spread, rng)

    def draw(per_class: int) -> tuple[np.ndarray, np.ndarray]:
        feats = np.concatenate(
            [means[k] + rng.standard_normal((per_class, dim)) for k in range(num_classes)]
        )
        labels = np.repeat(np.arange(num_classes), per_class)
        return feats, labels

    train_x, train_y = draw(per_class_train)
    test_x, test_y = draw(per_class_test)
    return (
        Dataset(train_x, train_y, num_classes),
        Dataset(test_x, test_y, num_classes),
    )


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Write "f0,...,f{k-1},label" rows; floats round-trip exactly."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.num_features)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_csv(path: str | Path) -> Dataset:
    """Read a dataset written by save_csv; classes = max label + 1."""
    path = Path(path)
    try:
        fh = path.open("r", newline="")
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: line 1: empty file") from None
        expected = [f"f{i}" for i in range(len(header) - 1)] + ["label"]
        if len(header) < 2 or header != expected:
            raise ParseError(
                f"{path}: line 1: header must be f0,...,f{{k-1}},label, got {header}"
            )
        width = len(header) - 1
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise ParseError(
                    f"{path}: line {lineno}: expected {width + 1} fields, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row[:-1]])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            try:
                label = int(row[-1])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            if label < 0:
                raise ParseError(f"{path}: line {lineno}: negative label {label}")
            labels.append(label)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    labels_arr = np.asarray(labels, dtype=np.int64)
    return Dataset(np.asarray(rows), labels_arr, int(labels_arr.max()) + 1)


@dataclass(frozen=True)
class TaskSpec:
    """What to unlearn: one whole class, or a set of training samples."""

    kind: str
    class_id: int | None = None
    sample_count: int | None = None
    sample_indices: tuple[int, ...] | None = None
    seed: int = 0
    eval_cap: int = EVAL_CAP


@dataclass
class Batch:
    """A slice of a dataset view plus where its rows came from."""

    features: np.ndarray
    labels: np.ndarray
    indices: np.ndarray
    source: str = "train"


class UnlearnTask:
    """Train/test pair partitioned for one unlearning request.

    Index arrays always refer to rows of the full train or test split.
    The unlearning and remaining train indices partition the train split
    exactly; for class tasks the test split is partitioned the same way.
    """

    def __init__(
        self,
        train: Dataset,
        test: Dataset,
        kind: str,
        unlearn_train_idx: np.ndarray,
        remain_train_idx: np.ndarray,
        class_id: int | None = None,
        unlearn_test_idx: np.ndarray | None = None,
        remain_test_idx: np.ndarray | None = None,
        eval_unlearn_idx: np.ndarray | None = None,
        eval_test_idx: np.ndarray | None = None,
    ):
        self.train = train
        self.test = test
        self.kind = kind
        self.class_id = class_id
        self.unlearn_train_idx = np.asarray(unlearn_train_idx, dtype=np.int64)
        self.remain_train_idx = np.asarray(remain_train_idx, dtype=np.int64)
        self.unlearn_test_idx = (
            None if unlearn_test_idx is None else np.asarray(unlearn_test_idx, dtype=np.int64)
        )
        self.remain_test_idx = (
            None if remain_test_idx is None else np.asarray(remain_test_idx, dtype=np.int64)
        )
        self.eval_unlearn_idx = (
            None if eval_unlearn_idx is None else np.asarray(eval_unlearn_idx, dtype=np.int64)
        )
        self.eval_test_idx = (
            None if eval_test_idx is None else np.asarray(eval_test_idx, dtype=np.int64)
        )
        self._validate()

    def _validate(self) -> None:
        if self.kind not in ("class", "sample"):
            raise ValidationError(f"unknown task kind {self.kind!r}")
        if self.unlearn_train_idx.size == 0:
            raise EmptyUnlearnSetError("unlearning set selects no training samples")
        merged = np.sort(np.concatenate([self.unlearn_train_idx, self.remain_train_idx]))
        if not np.array_equal(merged, np.arange(len(self.train))):
            raise ValidationError(
                "unlearning and remaining indices must partition the train split"
            )
        if self.kind == "class":
            if self.unlearn_test_idx is None or self.remain_test_idx is None:
                raise ValidationError("class task requires test-side partition")
            merged_test = np.sort(
                np.concatenate([self.unlearn_test_idx, self.remain_test_idx])
            )
            if not np.array_equal(merged_test, np.arange(len(self.test))):
                raise ValidationError(
                    "unlearning and remaining test indices must partition the test split"
                )

    @cached_property
    def unlearn_train(self) -> Dataset:
        return self.train.subset(self.unlearn_train_idx)

    @cached_property
    def remain_train(self) -> Dataset:
        return self.train.subset(self.remain_train_idx)

    @cached_property
    def unlearn_test(self) -> Dataset:
        if self.unlearn_test_idx is None:
            raise ValidationError("sample task has no unlearning test view")
        return self.test.subset(self.unlearn_test_idx)

    @cached_property
    def remain_test(self) -> Dataset:
        if self.remain_test_idx is None:
            raise ValidationError("sample task has no remaining test view")
        return self.test.subset(self.remain_test_idx)

    @cached_property
    def eval_unlearn(self) -> Dataset:
        """Unlearning-side evaluation view used by the termination check."""
        if self.kind == "class":
            return self.unlearn_test
        return self.train.subset(self.eval_unlearn_idx)

    @cached_property
    def eval_test(self) -> Dataset:
        """Test-side evaluation view for the sample termination check."""
        if self.kind == "class":
            raise ValidationError("class task termination uses only the unlearning view")
        return self.test.subset(self.eval_test_idx)


def make_task(train: Dataset, test: Dataset, spec: TaskSpec) -> UnlearnTask:
    """Partition a train/test pair according to a task spec."""
    if train.num_classes != test.num_classes:
        raise ValidationError("train and test disagree on the number of classes")
    if train.num_features != test.num_features:
        raise ValidationError("train and test disagree on the feature width")

    if spec.kind == "class":
        if spec.class_id is None or not 0 <= spec.class_id < train.num_classes:
            raise ValidationError(
                f"class task requires class_id in [0, {train.num_classes})"
            )
        u_tr = train.class_indices(spec.class_id)
        if u_tr.size == 0:
            raise EmptyUnlearnSetError(
                f"class {spec.class_id} has no training samples"
            )
        u_ts = test.class_indices(spec.class_id)
        if u_ts.size == 0:
            raise EmptyUnlearnSetError(
                f"class {spec.class_id} has no test samples to evaluate termination on"
            )
        r_tr = np.flatnonzero(train.labels != spec.class_id)
        r_ts = np.flatnonzero(test.labels != spec.class_id)
        return UnlearnTask(
            train,
            test,
            "class",
            unlearn_train_idx=u_tr,
            remain_train_idx=r_tr,
            class_id=spec.class_id,
            unlearn_test_idx=u_ts,
            remain_test_idx=r_ts,
        )

    if spec.kind == "sample":
        if spec.sample_indices is not None:
            u_tr = np.asarray(sorted(spec.sample_indices), dtype=np.int64)
            if u_tr.size == 0:
                raise EmptyUnlearnSetError("explicit sample index set is empty")
            if np.unique(u_tr).size != u_tr.size:
                raise ValidationError("sample indices contain duplicates")
            if u_tr.min() < 0 or u_tr.max() >= len(train):
                raise ValidationError(
                    f"sample indices must lie in [0, {len(train)})"
                )
        else:
            if spec.sample_count is None or spec.sample_count < 1:
                raise EmptyUnlearnSetError("sample task requires a positive sample_count")
            if spec.sample_count > len(train):
                raise ValidationError(
                    f"sample_count {spec.sample_count} exceeds train size {len(train)}"
                )
            rng = np.random.default_rng([spec.seed, TAG_TASK_SELECT])
            u_tr = np.sort(rng.choice(len(train), size=spec.sample_count, replace=False))
        mask = np.ones(len(train), dtype=bool)
        mask[u_tr] = False
        r_tr = np.flatnonzero(mask)

        eval_rng = np.random.default_rng([spec.seed, TAG_EVAL_SUBSET])
        n_u_eval = min(u_tr.size, spec.eval_cap)
        eval_u = np.sort(eval_rng.choice(u_tr, size=n_u_eval, replace=False))
        n_ts_eval = min(len(test), spec.eval_cap)
        eval_ts = np.sort(eval_rng.choice(len(test), size=n_ts_eval, replace=False))
        return UnlearnTask(
            train,
            test,
            "sample",
            unlearn_train_idx=u_tr,
            remain_train_idx=r_tr,
            eval_unlearn_idx=eval_u,
            eval_test_idx=eval_ts,
        )

    raise ValidationError(f"unknown task kind {spec.kind!r}")


def batches(
    view: Dataset,
    batch_size: int,
    seed,
    drop_last: bool = False,
    source: str = "train",
) -> list[Batch]:
    """Seeded permutation of a view, chunked into batches.

    The final short chunk is kept unless drop_last is set, so every row
    appears exactly once per epoch.
    """
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(view))
    out = []
    for start in range(0, len(view), batch_size):
        idx = order[start : start + batch_size]
        if drop_last and idx.size < batch_size:
            break
        out.append(
            Batch(
                features=view.features[idx],
                labels=view.labels[idx],
                indices=idx,
                source=source,
            )
        )
    return out


def sample_remaining(task: UnlearnTask, batch_size: int, rng: np.random.Generator) -> Batch:
    """One uniform without-replacement batch from the remaining train view.

    Draws fresh from the supplied generator on every call, which is how
    the engine resamples remaining batches within an epoch.
    """
    remain = task.remain_train
    if len(remain) < batch_size:
        raise ConfigurationError(
            f"remaining train view has {len(remain)} rows, need >= {batch_size}"
        )
    idx = rng.choice(len(remain), size=batch_size, replace=False)
    return Batch(
        features=remain.features[idx],
        labels=remain.labels[idx],
        indices=idx,
        source="remain",
    )
