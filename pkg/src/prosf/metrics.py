"""Accuracy, over-defense and under-defense errors, and the abstention/overshoot diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model_core import CostModel, Dataset, LinearClassifier
from .response import rational_responses

__all__ = [
    "EvalReport",
    "accuracy",
    "over_defense_error",
    "under_defense_error",
    "abstention_set",
    "overshoot_set",
    "evaluate",
    "CSV_FIELDS",
]

CSV_FIELDS = ("dataset", "agent_paradigm", "classifier_variant", "seed", "accuracy", "ode",
              "ude", "n", "abstention_count", "overshoot_count")
OVERSHOOT_TOL = 1e-9


def _nonempty(data: Dataset, what: str = "deployed"):
    if len(data) == 0:
        raise ValueError(f"{what} dataset is empty")


def _aligned(clean: Dataset, deployed: Dataset):
    if len(clean) != len(deployed) or clean.dimension != deployed.dimension:
        raise ValueError("clean and deployed datasets are not index-aligned")
    if not np.array_equal(clean.y, deployed.y):
        raise ValueError("clean and deployed labels differ; datasets are not index-aligned")


def accuracy(f: LinearClassifier, deployed: Dataset) -> float:
    _nonempty(deployed)
    return float(np.mean(f.predict(deployed.X) == deployed.y))


def over_defense_error(f: LinearClassifier, clean: Dataset, deployed: Dataset,
                       f_clean: LinearClassifier) -> float:
    """Share of all examples that are positive, accepted by ``f_clean`` on truthful
    features, yet rejected by ``f`` after responding."""
    _nonempty(deployed)
    _aligned(clean, deployed)
    hit = (clean.y == 1) & (f_clean.predict(clean.X) == 1) & (f.predict(deployed.X) == -1)
    return float(np.mean(hit))


def under_defense_error(f: LinearClassifier, deployed: Dataset) -> float:
    """Share of all examples that are negative and accepted after responding."""
    _nonempty(deployed)
    return float(np.mean((deployed.y == -1) & (f.predict(deployed.X) == 1)))


def abstention_set(f: LinearClassifier, cm: CostModel, clean: Dataset, deployed: Dataset) -> np.ndarray:
    """Mask of agents a rational model expects to move who stayed put."""
    _aligned(clean, deployed)
    br = rational_responses(clean.X, f, cm)
    moved_rational = np.any(br != clean.X, axis=1)
    stayed = np.all(deployed.X == clean.X, axis=1)
    return moved_rational & stayed


def overshoot_set(f: LinearClassifier, cm: CostModel, clean: Dataset, deployed: Dataset,
                  tol: float = OVERSHOOT_TOL) -> np.ndarray:
    """Mask of agents who paid more than the rational response would cost."""
    _aligned(clean, deployed)
    br = rational_responses(clean.X, f, cm)
    return cm.cost(clean.X, deployed.X) > cm.cost(clean.X, br) + tol


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    over_defense_error: float
    under_defense_error: float
    n: int
    abstention_count: int = 0
    overshoot_count: int = 0

    def __post_init__(self):
        for name in ("accuracy", "over_defense_error", "under_defense_error"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def row(self, dataset: str, agent_paradigm: str, classifier_variant: str, seed: int) -> dict:
        return {"dataset": dataset, "agent_paradigm": agent_paradigm,
                "classifier_variant": classifier_variant, "seed": seed,
                "accuracy": self.accuracy, "ode": self.over_defense_error,
                "ude": self.under_defense_error, "n": self.n,
                "abstention_count": self.abstention_count,
                "overshoot_count": self.overshoot_count}


def evaluate(f: LinearClassifier, clean: Dataset, deployed: Dataset, f_clean: LinearClassifier,
             cm: Optional[CostModel] = None) -> EvalReport:
    """All metrics for one deployment; diagnostic counts need ``cm``."""
    a_count = b_count = 0
    if cm is not None and cm.is_positive_definite:
        a_count = int(abstention_set(f, cm, clean, deployed).sum())
        b_count = int(overshoot_set(f, cm, clean, deployed).sum())
    return EvalReport(accuracy(f, deployed), over_defense_error(f, clean, deployed, f_clean),
                      under_defense_error(f, deployed), len(deployed), a_count, b_count)
