"""Stackelberg training against modeled agents, dynamics diagnostics, deployment error."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .behavior import ProspectParams
from .model_core import CostModel, Dataset, LinearClassifier, train_logistic
from .response import CandidateConfig, PopulationSpec, respond_population

__all__ = [
    "TrainingConfig",
    "IterationRecord",
    "DynamicsTrace",
    "train_strategic",
    "deployment_error",
    "STAGES",
    "behavioral_sweep",
    "StrategicClassifier",
]


@dataclass(frozen=True)
class TrainingConfig:
    outer_iters: int = 20
    inner_lr: float = 0.5
    inner_epochs: int = 300
    tol: float = 1e-4
    seed: int = 0
    l2: float = 1e-3

    def __post_init__(self):
        if self.outer_iters < 1:
            raise ValueError("outer_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    params: np.ndarray
    change_norm: float
    train_accuracy: float  # new classifier on the data it was fitted to
    response_accuracy: float  # previous classifier on responses to itself
    contraction: Optional[float]


@dataclass
class DynamicsTrace:
    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    returned_iteration: int = 0

    @property
    def change_norms(self) -> np.ndarray:
        return np.array([r.change_norm for r in self.records])

    @property
    def contractions(self) -> np.ndarray:
        return np.array([r.contraction for r in self.records if r.contraction is not None])

    def tail_contraction(self, k: int = 3) -> float:
        """Median ratio over the last ``k`` defined steps (nan if none)."""
        q = self.contractions
        q = q[np.isfinite(q)]
        return float(np.median(q[-k:])) if len(q) else float("nan")

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        d = len(self.records[0].params) - 1 if self.records else 0
        wr.writerow(["iteration", "change_norm", "train_accuracy", "response_accuracy",
                     "contraction"] + [f"w{i}" for i in range(d)] + ["bias"])
        for r in self.records:
            wr.writerow([r.iteration, repr(r.change_norm), repr(r.train_accuracy),
                         repr(r.response_accuracy),
                         "" if r.contraction is None else repr(r.contraction)]
                        + [repr(float(v)) for v in r.params])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def _accuracy(f: LinearClassifier, data: Dataset) -> float:
    return float(np.mean(f.predict(data.X) == data.y))


def train_strategic(data: Dataset, cm: CostModel, agent_model: PopulationSpec,
                    tc: TrainingConfig = TrainingConfig(),
                    candidates: CandidateConfig = CandidateConfig(),
                    init: Optional[LinearClassifier] = None):
    """Alternate agent responses and warm-started logistic refits.

    Each outer step computes ``D~ = respond(data, f_t)`` and fits
    ``f_{t+1}`` on ``D~`` starting from ``f_t``. Stops once the parameter
    change drops below ``tc.tol``. If the iteration never settles and keeps
    expanding (tail contraction >= 1), the iterate with the best accuracy on
    responses to itself is returned instead of the last one.
    """
    f = LinearClassifier.zeros(data.dimension) if init is None else init
    trace = DynamicsTrace()
    iterates = [f]
    prev_change = None
    for t in range(tc.outer_iters):
        manipulated = respond_population(data, f, cm, agent_model, tc.seed, candidates)
        f_next = train_logistic(manipulated, tc.inner_lr, tc.inner_epochs, tc.seed, tc.l2,
                                init=f)
        change = float(np.linalg.norm(f_next.params - f.params))
        q = None
        if prev_change is not None:
            q = change / prev_change if prev_change > 0 else (0.0 if change == 0 else float("inf"))
        trace.records.append(IterationRecord(
            t + 1, f_next.params, change, _accuracy(f_next, manipulated),
            _accuracy(f, manipulated), q))
        prev_change = change
        f = f_next
        iterates.append(f)
        if change < tc.tol:
            trace.converged = True
            break
    trace.iterations_used = len(trace.records)
    trace.returned_iteration = trace.iterations_used
    if not trace.converged and trace.iterations_used >= 3 and trace.tail_contraction() >= 1:
        # response_accuracy of record t scores iterate t-1
        scores = [r.response_accuracy for r in trace.records[1:]]
        best = int(np.argmax(scores)) + 1
        trace.returned_iteration = best
        f = iterates[best]
    return f, trace


def deployment_error(f: LinearClassifier, deployed: Dataset) -> float:
    """Empirical 0-1 loss of ``f`` on a post-manipulation dataset."""
    if len(deployed) == 0:
        raise ValueError("deployed dataset is empty")
    return float(np.mean(f.predict(deployed.X) != deployed.y))


STAGES = ("loss_aversion", "reference_bias", "probability_distortion")


def stage_params(base: ProspectParams, enabled: Sequence[str]) -> ProspectParams:
    unknown = set(enabled) - set(STAGES)
    if unknown:
        raise ValueError(f"unknown stages: {sorted(unknown)}")
    return base.neutralized(loss="loss_aversion" not in enabled,
                            reference="reference_bias" not in enabled,
                            probability="probability_distortion" not in enabled)


def behavioral_sweep(data: Dataset, cm: CostModel, base: ProspectParams,
                     stages: Sequence[str] = STAGES, tc: TrainingConfig = TrainingConfig(),
                     candidates: CandidateConfig = CandidateConfig(),
                     eval_data: Optional[Dataset] = None, classifier: Optional[LinearClassifier] = None):
    """Accuracy of the rationally trained classifier as biases are enabled one by one.

    Returns ``[(stage_label, accuracy), ...]`` starting with ``"none"``
    (all mechanisms neutral), then one row per cumulatively enabled stage.
    """
    if not stages:
        raise ValueError("stages must be nonempty")
    if classifier is None:
        classifier, _ = train_strategic(data, cm, PopulationSpec.rational(), tc, candidates)
    target = data if eval_data is None else eval_data
    rows = []
    for k in range(len(stages) + 1):
        enabled = tuple(stages[:k])
        agents = PopulationSpec.prospect(stage_params(base, enabled))
        deployed = respond_population(target, classifier, cm, agents, tc.seed, candidates)
        rows.append(("none" if k == 0 else "+" + enabled[-1], 1 - deployment_error(classifier, deployed)))
    return rows


class StrategicClassifier(ClassifierMixin, BaseEstimator):
    """Linear classifier trained against modeled strategic agents.

    ``agents`` is ``"rational"``, ``"prospect"`` (single parameter set
    ``prospect_params``) or a :class:`PopulationSpec`. Labels must be in
    {-1, +1} or {0, 1}. After ``fit`` the final classifier is ``classifier_``
    and the outer-loop record is ``trace_``.
    """

    def __init__(self, agents="prospect", prospect_params=None, lam=1.0, metric=None,
                 outer_iters=20, inner_lr=0.5, inner_epochs=300, tol=1e-4, l2=1e-3,
                 n_dirs=1, n_mags=60, max_cost=None, random_state=0):
        self.agents = agents
        self.prospect_params = prospect_params
        self.lam = lam
        self.metric = metric
        self.outer_iters = outer_iters
        self.inner_lr = inner_lr
        self.inner_epochs = inner_epochs
        self.tol = tol
        self.l2 = l2
        self.n_dirs = n_dirs
        self.n_mags = n_mags
        self.max_cost = max_cost
        self.random_state = random_state

    def _population(self) -> PopulationSpec:
        if isinstance(self.agents, PopulationSpec):
            return self.agents
        if self.agents == "rational":
            return PopulationSpec.rational()
        if self.agents == "prospect":
            return PopulationSpec.prospect(self.prospect_params or ProspectParams())
        raise ValueError(f"unknown agents setting {self.agents!r}")

    def cost_model(self, d: int) -> CostModel:
        M = np.eye(d) if self.metric is None else np.asarray(self.metric, dtype=float)
        return CostModel(M, self.lam)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError("StrategicClassifier needs two classes")
        y_pm = np.where(y == self.classes_[1], 1, -1)
        tc = TrainingConfig(self.outer_iters, self.inner_lr, self.inner_epochs, self.tol,
                            self.random_state, self.l2)
        cands = CandidateConfig(self.n_dirs, self.n_mags, self.max_cost, self.random_state)
        self.cost_model_ = self.cost_model(X.shape[1])
        self.classifier_, self.trace_ = train_strategic(
            Dataset(X, y_pm), self.cost_model_, self._population(), tc, cands)
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
        return np.where(pm > 0, self.classes_[1], self.classes_[0])
