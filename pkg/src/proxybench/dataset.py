"""Labeled datasets: CSV loading, synthetic generation, splitting, filtering.

Feature vectors are float64 throughout, labels are non-negative class ids.
A Dataset is immutable once constructed, and every derived dataset (split,
filter, subset) preserves the original example ids, so rows stay traceable
across the whole pipeline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Example",
    "Dataset",
    "SynthSpec",
    "load_csv",
    "synth_generate",
    "split",
    "class_filter",
    "subset_by_ids",
]

# Sub-stream tags so each randomized stage draws from an independent generator.
_STREAM_MEANS = 1
_STREAM_NOISE = 2
_STREAM_FLIPS = 3
_STREAM_SPLIT = 4


@dataclass(frozen=True, eq=False)
class Example:
    """One labeled feature vector with a stable non-negative integer id."""

    id: int
    features: np.ndarray
    label: int

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"example id must be >= 0, got {self.id}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"example {self.id}: non-finite feature value")


class Dataset:
    """Ordered, immutable collection of examples with a fixed label space.

    class_count and feature_dim are properties of the label/feature space,
    not of the examples present: filtering away classes does not shrink
    class_count, so models keep the same output head across subsets.
    """

    def __init__(self, examples, class_count: int, feature_dim: int, id: str = "dataset"):
        examples = list(examples)
        if class_count < 1:
            raise ValueError(f"class_count must be >= 1, got {class_count}")
        if feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {feature_dim}")
        for ex in examples:
            if not (0 <= ex.label < class_count):
                raise ValueError(
                    f"example {ex.id}: label {ex.label} outside [0, {class_count})"
                )
            if len(ex.features) != feature_dim:
                raise ValueError(
                    f"example {ex.id}: feature length {len(ex.features)} != {feature_dim}"
                )
        ids = [ex.id for ex in examples]
        if len(set(ids)) != len(ids):
            raise ValueError("example ids are not unique")

        self.examples = examples
        self.class_count = int(class_count)
        self.feature_dim = int(feature_dim)
        self.id = str(id)

        if examples:
            feats = np.stack([np.asarray(ex.features, dtype=np.float64) for ex in examples])
        else:
            feats = np.zeros((0, feature_dim), dtype=np.float64)
        feats.setflags(write=False)
        self._features = feats
        self._labels = np.asarray([ex.label for ex in examples], dtype=np.int64)
        self._labels.setflags(write=False)
        self._ids = np.asarray(ids, dtype=np.int64)
        self._ids.setflags(write=False)
        self._row_of_id = {int(i): row for row, i in enumerate(ids)}

    def __len__(self) -> int:
        return len(self.examples)

    def __repr__(self) -> str:
        return (
            f"Dataset(id={self.id!r}, n={len(self)}, "
            f"classes={self.class_count}, dim={self.feature_dim})"
        )

    @property
    def features(self) -> np.ndarray:
        """(n, feature_dim) float64 matrix in example order. Read-only."""
        return self._features

    @property
    def labels(self) -> np.ndarray:
        """(n,) int64 label vector in example order. Read-only."""
        return self._labels

    @property
    def ids(self) -> np.ndarray:
        """(n,) int64 example-id vector in example order. Read-only."""
        return self._ids

    def id_set(self) -> set[int]:
        return set(self._row_of_id)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a deterministic gaussian-blob classification dataset.

    Each class mean sits on a sphere of radius class_separation; every
    example gets its own noise scale drawn uniformly from
    [noise_scale_lo, noise_scale_hi], which spreads examples across a
    difficulty spectrum. A label_flip_fraction of examples receive a
    uniformly-random wrong label to emulate mislabeled data.
    """

    class_count: int
    feature_dim: int
    examples_per_class: int
    class_separation: float
    noise_scale_lo: float
    noise_scale_hi: float
    label_flip_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.examples_per_class < 1:
            raise ValueError("examples_per_class must be >= 1")
        if self.class_separation <= 0:
            raise ValueError("class_separation must be > 0")
        if self.noise_scale_lo < 0 or self.noise_scale_hi < self.noise_scale_lo:
            raise ValueError("need 0 <= noise_scale_lo <= noise_scale_hi")
        if not (0 <= self.label_flip_fraction < 1):
            raise ValueError("label_flip_fraction must be in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def load_csv(path: str | Path, id: str | None = None) -> Dataset:
    """Load a dataset from CSV rows of the form ``label,f0,f1,...``.

    A header row is allowed and detected by a non-numeric first cell.
    Labels must be non-negative integers; class_count is 1 + max label.
    Example ids are assigned by data-row order starting at 0.

    Raises FileNotFoundError for a missing file and ValueError naming the
    offending data row (1-based) for ragged rows, non-integer labels, or
    non-finite features.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")

    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]

    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]  # header row
    if not rows:
        raise ValueError(f"{path}: no rows")

    feature_dim = len(rows[0]) - 1
    if feature_dim < 1:
        raise ValueError(f"{path}: row 1: expected a label and at least one feature")

    examples = []
    for n, row in enumerate(rows, start=1):
        if len(row) - 1 != feature_dim:
            raise ValueError(
                f"{path}: row {n}: has {len(row) - 1} features, expected {feature_dim}"
            )
        try:
            label = int(row[0])
        except ValueError:
            raise ValueError(f"{path}: row {n}: non-integer label {row[0]!r}") from None
        if label < 0:
            raise ValueError(f"{path}: row {n}: negative label {label}")
        try:
            feats = np.array([float(v) for v in row[1:]], dtype=np.float64)
        except ValueError:
            raise ValueError(f"{path}: row {n}: non-numeric feature") from None
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"{path}: row {n}: non-finite feature")
        examples.append(Example(id=n - 1, features=feats, label=label))

    class_count = 1 + max(ex.label for ex in examples)
    return Dataset(examples, class_count, feature_dim, id=id or path.stem)


def _class_means(spec: SynthSpec) -> np.ndarray:
    """Per-class means, each a deterministic function of (seed, class)."""
    means = np.zeros((spec.class_count, spec.feature_dim))
    for c in range(spec.class_count):
        g = np.random.default_rng([spec.seed, _STREAM_MEANS, c])
        v = g.standard_normal(spec.feature_dim)
        norm = np.linalg.norm(v)
        if norm == 0.0:  # astronomically unlikely; keep determinism anyway
            v[0] = 1.0
            norm = 1.0
        means[c] = spec.class_separation * v / norm
    return means


def synth_generate(spec: SynthSpec) -> Dataset:
    """Generate a synthetic dataset, fully deterministic given spec.seed."""
    n_total = spec.class_count * spec.examples_per_class
    means = _class_means(spec)

    labels = np.repeat(np.arange(spec.class_count), spec.examples_per_class)
    g_noise = np.random.default_rng([spec.seed, _STREAM_NOISE])
    sigmas = g_noise.uniform(spec.noise_scale_lo, spec.noise_scale_hi, size=n_total)
    noise = g_noise.standard_normal((n_total, spec.feature_dim))
    feats = means[labels] + sigmas[:, None] * noise

    if spec.label_flip_fraction > 0:
        n_flip = int(spec.label_flip_fraction * n_total)
        g_flip = np.random.default_rng([spec.seed, _STREAM_FLIPS])
        flip_idx = g_flip.choice(n_total, size=n_flip, replace=False)
        for i in flip_idx:
            wrong = int(g_flip.integers(0, spec.class_count - 1))
            if wrong >= labels[i]:
                wrong += 1
            labels[i] = wrong

    examples = [
        Example(id=i, features=feats[i], label=int(labels[i])) for i in range(n_total)
    ]
    ds_id = (
        f"synth_k{spec.class_count}_d{spec.feature_dim}"
        f"_n{spec.examples_per_class}_s{spec.seed}"
    )
    return Dataset(examples, spec.class_count, spec.feature_dim, id=ds_id)


def split(d: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/validation split, deterministic given seed.

    Each class contributes round(val_fraction * class size) validation
    examples. The validation split is meant to be computed once per dataset
    and reused across all proxies, which determinism guarantees as long as
    (val_fraction, seed) stay fixed.
    """
    if not (0 < val_fraction < 1):
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if val_fraction * len(d) < d.class_count:
        raise ValueError(
            f"dataset too small to stratify: val_fraction*{len(d)} < {d.class_count} classes"
        )

    rng = np.random.default_rng([seed, _STREAM_SPLIT])
    val_ids: set[int] = set()
    for c in range(d.class_count):
        class_ids = d.ids[d.labels == c]
        if len(class_ids) == 0:
            continue
        n_val = int(round(val_fraction * len(class_ids)))
        if n_val < 1:
            raise ValueError(f"class {c} would get 0 validation examples")
        if n_val >= len(class_ids):
            raise ValueError(f"class {c} would get 0 training examples")
        picked = rng.permutation(class_ids)[:n_val]
        val_ids.update(int(i) for i in picked)

    train_ex = [ex for ex in d.examples if ex.id not in val_ids]
    val_ex = [ex for ex in d.examples if ex.id in val_ids]
    train = Dataset(train_ex, d.class_count, d.feature_dim, id=d.id)
    val = Dataset(val_ex, d.class_count, d.feature_dim, id=d.id)
    return train, val


def class_filter(d: Dataset, classes) -> Dataset:
    """Keep only examples whose label is in ``classes``.

    Labels are not renumbered and class_count is unchanged, so a model's
    output head stays comparable across filtered and unfiltered data.
    """
    classes = set(int(c) for c in classes)
    if not classes:
        raise ValueError("class set is empty")
    bad = [c for c in classes if not (0 <= c < d.class_count)]
    if bad:
        raise ValueError(f"unknown class ids {sorted(bad)} for class_count {d.class_count}")
    kept = [ex for ex in d.examples if ex.label in classes]
    return Dataset(kept, d.class_count, d.feature_dim, id=d.id)


def subset_by_ids(d: Dataset, ids) -> Dataset:
    """Subset of d containing exactly the given example ids.

    Output order follows the source dataset's order, not the order of
    ``ids``, so any permutation of the same id set yields an identical
    dataset.
    """
    wanted = set(int(i) for i in ids)
    missing = wanted - d.id_set()
    if missing:
        raise ValueError(f"ids not present in dataset {d.id!r}: {sorted(missing)[:5]}")
    kept = [ex for ex in d.examples if ex.id in wanted]
    return Dataset(kept, d.class_count, d.feature_dim, id=d.id)
