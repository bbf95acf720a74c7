"""Synthetic benchmark, CSV ingestion, normalization and stratified splits."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .model_core import Dataset

__all__ = [
    "SyntheticSpec",
    "generate_synthetic",
    "CsvSchema",
    "load_schema",
    "load_csv",
    "save_dataset_csv",
    "load_dataset_csv",
    "NormalizationRecord",
    "normalize",
    "Standardizer",
    "SplitSpec",
    "split",
]


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 2000
    d: int = 10
    class_separation: float = 2.0
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.class_separation > 0:
            raise ValueError("class_separation must be positive")
        if not 0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Two unit-covariance Gaussians at ``±(separation/2)·u``, balanced in expectation."""
    rng = np.random.default_rng(spec.seed)
    u = rng.standard_normal(spec.d)
    u /= np.linalg.norm(u)
    y = np.where(rng.random(spec.n) < 0.5, 1, -1)
    X = rng.standard_normal((spec.n, spec.d)) + (spec.class_separation / 2) * y[:, None] * u
    if spec.label_noise > 0:
        flip = rng.random(spec.n) < spec.label_noise
        y = np.where(flip, -y, y)
    return Dataset(X, y, f"synthetic-{spec.seed}")


@dataclass(frozen=True)
class CsvSchema:
    """Which columns to read and how to map the label.

    ``categorical`` lists the feature columns to one-hot encode; every other
    feature column must parse as a number.
    """

    features: Tuple[str, ...]
    label: str
    positive: str
    categorical: Tuple[str, ...] = ()
    name: str = "data"

    def __post_init__(self):
        if not self.features:
            raise ValueError("schema lists no feature columns")
        if self.label in self.features:
            raise ValueError("label column is also listed as a feature")
        extra = set(self.categorical) - set(self.features)
        if extra:
            raise ValueError(f"categorical columns not among features: {sorted(extra)}")
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "categorical", tuple(self.categorical))
        object.__setattr__(self, "positive", str(self.positive))


_SCHEMA_KEYS = {"features", "label", "positive", "categorical", "name"}


def load_schema(path) -> CsvSchema:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    unknown = set(raw) - _SCHEMA_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown schema keys {sorted(unknown)}")
    return CsvSchema(**raw)


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a header-first CSV into a dataset.

    Rows with an empty field in a used column are dropped. Categorical
    columns expand to one indicator per level in first-seen order, placed
    where the column sits in ``schema.features``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        col = {h.strip(): i for i, h in enumerate(header)}
        missing = [c for c in (*schema.features, schema.label) if c not in col]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            vals = {c: row[col[c]].strip() for c in (*schema.features, schema.label)}
            if any(v == "" for v in vals.values()):
                continue
            records.append((lineno, vals))
    if not records:
        raise ValueError(f"{path}: no usable rows")
    labels = sorted({v[schema.label] for _, v in records})
    if len(labels) > 2:
        raise ValueError(f"{path}: label column {schema.label!r} has {len(labels)} values, expected 2")
    if schema.positive not in labels and len(labels) == 2:
        raise ValueError(f"{path}: positive label {schema.positive!r} not found in {labels}")
    levels = {c: [] for c in schema.categorical}
    for _, v in records:
        for c in schema.categorical:
            if v[c] not in levels[c]:
                levels[c].append(v[c])
    rows = []
    for lineno, v in records:
        out = []
        for c in schema.features:
            if c in levels:
                out.extend(1.0 if v[c] == lev else 0.0 for lev in levels[c])
            else:
                try:
                    out.append(float(v[c]))
                except ValueError:
                    raise ValueError(f"{path}: row {lineno}: column {c!r} value {v[c]!r} "
                                     "is not numeric") from None
        rows.append(out)
    y = np.array([1 if v[schema.label] == schema.positive else -1 for _, v in records])
    X = np.array(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X))[0, 0])
        raise ValueError(f"{path}: row {records[bad][0]}: non-finite value")
    return Dataset(X, y, schema.name)


def save_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{j}" for j in range(data.dimension)] + ["y"])
        for x, y in zip(data.X, data.y):
            wr.writerow([repr(float(v)) for v in x] + [int(y)])


def load_dataset_csv(path, name: Optional[str] = None) -> Dataset:
    """Read a file written by :func:`save_dataset_csv` (last column is the ±1 label)."""
    d = len(open(path, encoding="utf-8").readline().split(",")) - 1
    schema = CsvSchema(tuple(f"x{j}" for j in range(d)), "y", "1",
                       name=name or Path(path).stem)
    return load_csv(path, schema)


@dataclass(frozen=True)
class NormalizationRecord:
    mean: np.ndarray
    scale: np.ndarray  # 0 marks a constant feature

    def apply(self, data: Dataset) -> Dataset:
        return data.with_features(self.transform(data.X))

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.scale > 0, self.scale, 1.0)
        return np.where(self.scale > 0, (X - self.mean) / safe, 0.0)

    def inverse(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return Z * self.scale + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationRecord":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def normalize(data: Dataset) -> Tuple[Dataset, NormalizationRecord]:
    """Standardize each feature to zero mean and unit variance on ``data``."""
    mean = data.X.mean(axis=0)
    std = data.X.std(axis=0)
    # a spread at rounding level counts as constant
    scale = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0)
    rec = NormalizationRecord(mean, scale)
    return rec.apply(data), rec


class Standardizer(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`normalize`."""

    def fit(self, X, y=None):
        X = check_array(X)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.record_ = NormalizationRecord(mean, np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        return self.record_.transform(check_array(X))

    def inverse_transform(self, Z):
        check_is_fitted(self)
        return self.record_.inverse(check_array(Z))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    folds: int = 1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if not all(0 < f < 1 for f in fr):
            raise ValueError("split fractions must lie in (0, 1)")
        if abs(sum(fr) - 1) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.folds < 1:
            raise ValueError("folds must be >= 1")


def _largest_remainder(n: int, fractions: Sequence[float]) -> List[int]:
    raw = np.array(fractions) * n
    sizes = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - sizes), kind="stable")[: n - sizes.sum()]:
        sizes[i] += 1
    return sizes.tolist()


def split(data: Dataset, spec: SplitSpec) -> List[Tuple[Dataset, Dataset, Dataset]]:
    """Seeded, label-stratified (train, val, test) partitions.

    ``folds=1`` gives one split with the requested fractions. ``folds=K > 1``
    cuts each class into K blocks; rotation k tests on block k, validates on
    block k+1 and trains on the rest, so every example is tested exactly once.
    The fractions are then implied by K.
    """
    rng = np.random.default_rng(spec.seed)
    classes = [np.flatnonzero(data.y == c) for c in (-1, 1)]
    classes = [rng.permutation(idx) for idx in classes if len(idx)]
    if spec.folds == 1:
        parts = [[], [], []]
        for idx in classes:
            sizes = _largest_remainder(len(idx), (spec.train_fraction, spec.val_fraction,
                                                  spec.test_fraction))
            bounds = np.cumsum([0] + sizes)
            for p in range(3):
                parts[p].append(idx[bounds[p]:bounds[p + 1]])
        return [tuple(data.subset(np.sort(np.concatenate(p))) for p in parts)]
    K = spec.folds
    for idx in classes:
        if len(idx) < K:
            raise ValueError(f"a class has {len(idx)} examples, fewer than {K} folds")
    blocks = [np.array_split(idx, K) for idx in classes]
    out = []
    for k in range(K):
        v = (k + 1) % K
        test = np.concatenate([b[k] for b in blocks])
        val = np.concatenate([b[v] for b in blocks])
        train = np.concatenate([b[j] for b in blocks for j in range(K) if j not in (k, v)])
        out.append(tuple(data.subset(np.sort(i)) for i in (train, val, test)))
    return out
