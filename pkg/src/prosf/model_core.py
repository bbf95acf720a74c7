"""Linear classifier, Mahalanobis cost model, datasets and logistic training.

Scores are computed with elementwise products and last-axis reductions
rather than BLAS matvecs so that a row scored alone and the same row scored
inside a batch give bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy.special import expit, logit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

__all__ = [
    "LabeledExample",
    "Dataset",
    "LinearClassifier",
    "CostModel",
    "score",
    "predict",
    "cost",
    "cross_entropy",
    "train_logistic",
    "LogisticGD",
]


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class LabeledExample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (n, d) with labels ``y`` in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray
    name: str = "data"

    def __post_init__(self):
        X = np.atleast_2d(np.array(self.X, dtype=float))
        y = np.asarray(self.y)
        if X.shape[0] == 0:
            raise ValueError("dataset must be nonempty")
        if y.shape != (X.shape[0],):
            raise ValueError(f"label shape {y.shape} does not match {X.shape[0]} rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be exactly -1 or +1")
        X.setflags(write=False)
        y = y.astype(int)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[LabeledExample]:
        for x, y in zip(self.X, self.y):
            yield LabeledExample(x, int(y))

    def with_features(self, X: np.ndarray, name: Optional[str] = None) -> "Dataset":
        """Same labels, new features (e.g. after manipulation)."""
        return Dataset(X, self.y, self.name if name is None else name)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.name)


@dataclass(frozen=True)
class LinearClassifier:
    weights: np.ndarray
    bias: float = 0.0
    decision_threshold: float = 0.5

    def __post_init__(self):
        w = _as_readonly(np.ravel(self.weights))
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("classifier parameters must be finite")
        if not 0.0 < self.decision_threshold < 1.0:
            raise ValueError("decision_threshold must lie in (0, 1)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @classmethod
    def zeros(cls, d: int, decision_threshold: float = 0.5) -> "LinearClassifier":
        return cls(np.zeros(d), 0.0, decision_threshold)

    @classmethod
    def from_params(cls, theta, decision_threshold: float = 0.5) -> "LinearClassifier":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[:-1], theta[-1], decision_threshold)

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]

    @property
    def params(self) -> np.ndarray:
        """Stacked (weights, bias)."""
        return np.append(self.weights, self.bias)

    @property
    def threshold_logit(self) -> float:
        return float(logit(self.decision_threshold))

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dimension:
            raise ValueError(f"expected {self.dimension} features, got {X.shape[-1]}")
        return X

    def decision_function(self, X) -> np.ndarray:
        X = self._check(X)
        return np.sum(X * self.weights, axis=-1) + self.bias

    def score(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        # compare on the score scale so the threshold boundary is inclusive
        return np.where(self.score(X) >= self.decision_threshold, 1, -1)


def score(f: LinearClassifier, x) -> float | np.ndarray:
    """Model-implied acceptance probability ``logistic(w.x + b)``."""
    s = f.score(x)
    return float(s) if np.ndim(s) == 0 else s


def predict(f: LinearClassifier, x) -> int | np.ndarray:
    p = f.predict(x)
    return int(p) if np.ndim(p) == 0 else p


@dataclass(frozen=True)
class CostModel:
    """Mahalanobis manipulation cost ``sqrt((x2-x)' M (x2-x))`` scaled by ``lam``.

    ``squared=True`` switches to the squared quadratic form for sensitivity
    studies; it is not a metric.
    """

    metric: np.ndarray
    lam: float = 1.0
    squared: bool = False
    _diag: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        M = np.atleast_2d(np.array(self.metric, dtype=float))
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("metric must be a square matrix")
        if not np.allclose(M, M.T, atol=1e-9, rtol=0):
            raise ValueError("metric must be symmetric")
        if np.linalg.eigvalsh(M).min() < -1e-9:
            raise ValueError("metric must be positive semidefinite")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        M.setflags(write=False)
        object.__setattr__(self, "metric", M)
        object.__setattr__(self, "lam", float(self.lam))
        off = M - np.diag(np.diag(M))
        object.__setattr__(self, "_diag", np.diag(M).copy() if not off.any() else None)

    @classmethod
    def identity(cls, d: int, lam: float = 1.0, squared: bool = False) -> "CostModel":
        return cls(np.eye(d), lam, squared)

    @property
    def dimension(self) -> int:
        return self.metric.shape[0]

    @property
    def is_positive_definite(self) -> bool:
        return bool(np.linalg.eigvalsh(self.metric).min() > 1e-12)

    def quad_form(self, diff) -> np.ndarray:
        diff = np.asarray(diff, dtype=float)
        if diff.shape[-1] != self.dimension:
            raise ValueError(f"expected {self.dimension} features, got {diff.shape[-1]}")
        if self._diag is not None:
            return np.sum(diff * diff * self._diag, axis=-1)
        Md = np.sum(diff[..., :, None] * self.metric, axis=-2)
        return np.maximum(np.sum(Md * diff, axis=-1), 0.0)

    def cost(self, x, x2) -> np.ndarray:
        q = self.quad_form(np.asarray(x2, dtype=float) - np.asarray(x, dtype=float))
        return q if self.squared else np.sqrt(q)

    def step_for_cost(self, c) -> np.ndarray:
        """Metric length of a displacement whose cost equals ``c``."""
        c = np.asarray(c, dtype=float)
        return np.sqrt(c) if self.squared else c

    def dual_norm(self, w) -> float:
        """``sqrt(w' M^-1 w)``: logit gain per unit metric length along the best direction."""
        return float(np.sqrt(w @ np.linalg.solve(self.metric, w)))


def cost(cm: CostModel, x, x2) -> float | np.ndarray:
    c = cm.cost(x, x2)
    return float(c) if np.ndim(c) == 0 else c


def cross_entropy(f: LinearClassifier, data: Dataset) -> float:
    z = f.decision_function(data.X)
    # log(1 + exp(-y z)) with y in {-1, +1}
    return float(np.mean(np.logaddexp(0.0, -data.y * z)))


def train_logistic(
    data: Dataset,
    lr: float = 0.5,
    epochs: int = 300,
    seed: int = 0,
    l2: float = 0.0,
    init: Optional[LinearClassifier] = None,
    batch_size: Optional[int] = None,
    decision_threshold: float = 0.5,
) -> LinearClassifier:
    """Gradient descent on mean cross-entropy (+ optional L2 on the weights).

    Full-batch by default, in which case ``seed`` is unused; with
    ``batch_size`` the per-epoch shuffle is drawn from ``seed``. Starts from
    ``init`` (warm start) or all zeros.
    """
    if not lr > 0:
        raise ValueError("lr must be positive")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    X, y01 = data.X, (data.y > 0).astype(float)
    n, d = X.shape
    if init is None:
        init = LinearClassifier.zeros(d, decision_threshold)
    if init.dimension != d:
        raise ValueError("init dimension does not match data")
    w, b = init.weights.copy(), init.bias
    rng = np.random.default_rng(seed)
    bs = n if batch_size is None else int(batch_size)
    for _ in range(epochs):
        order = np.arange(n) if bs >= n else rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            Xb = X[idx]
            resid = expit(np.sum(Xb * w, axis=-1) + b) - y01[idx]
            w = w - lr * (Xb.T @ resid / len(idx) + l2 * w)
            b = b - lr * resid.mean()
    return LinearClassifier(w, b, init.decision_threshold)


class LogisticGD(ClassifierMixin, BaseEstimator):
    """Scikit-learn wrapper around :func:`train_logistic`.

    Accepts labels in {-1, +1} or {0, 1}; ``predict`` returns the labels it
    was fitted with.
    """

    def __init__(self, lr=0.5, epochs=300, l2=0.0, batch_size=None,
                 decision_threshold=0.5, random_state=0):
        self.lr = lr
        self.epochs = epochs
        self.l2 = l2
        self.batch_size = batch_size
        self.decision_threshold = decision_threshold
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) > 2:
            raise ValueError("LogisticGD is a binary classifier")
        pos = self.classes_[-1]
        y_pm = np.where(y == pos, 1, -1)
        if len(self.classes_) == 1 and self.classes_[0] in (-1, 0):
            y_pm = -np.ones_like(y_pm)
        self.classifier_ = train_logistic(
            Dataset(X, y_pm), self.lr, self.epochs, self.random_state, self.l2,
            batch_size=self.batch_size, decision_threshold=self.decision_threshold)
        self.coef_ = self.classifier_.weights[None, :]
        self.intercept_ = np.array([self.classifier_.bias])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        return self.classifier_.decision_function(check_array(X))

    def predict_proba(self, X):
        check_is_fitted(self)
        s = self.classifier_.score(check_array(X))
        return np.column_stack([1 - s, s])

    def predict(self, X):
        check_is_fitted(self)
        pm = self.classifier_.predict(check_array(X))
        if len(self.classes_) == 1:
            return np.full(pm.shape, self.classes_[0])
        return np.where(pm > 0, self.classes_[-1], self.classes_[0])
