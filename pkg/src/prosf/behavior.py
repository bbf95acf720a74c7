"""Prospect-theoretic utility pieces and the two agent utilities.

All functions broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model_core import CostModel, LinearClassifier

__all__ = [
    "ProspectParams",
    "value_asym",
    "weight_inverse_s",
    "weight_prelec",
    "weight",
    "reference_point",
    "prospect_value",
    "prospect_utility",
    "rational_utility",
    "TABLE4_DEFAULTS",
]

_EPS = 1e-12
WEIGHTINGS = ("inverse_s", "prelec")


@dataclass(frozen=True)
class ProspectParams:
    """Behavioral parameters of a prospect-theoretic agent.

    ``K=None`` means an unquantized reference point (``r = s(x)``).
    ``gamma_minus`` overrides ``gamma`` for the loss-side weighting curve.
    """

    alpha: float = 0.8
    beta: float = 0.7
    kappa: float = 2.25
    gamma: float = 0.7
    weighting: str = "inverse_s"
    prelec_shape: float = 0.68
    prelec_scale: float = 1.0
    K: Optional[int] = 5
    cost_in_loss: bool = True
    choice_temperature: float = 5.0
    gamma_minus: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1 or not 0 < self.beta <= 1:
            raise ValueError("alpha and beta must lie in (0, 1]")
        # kappa = 1 is admitted as the loss-neutral setting
        if not self.kappa >= 1:
            raise ValueError("kappa must be >= 1")
        for g in (self.gamma, self.gamma_minus):
            if g is not None and not 0 < g <= 1:
                raise ValueError("gamma must lie in (0, 1]")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if self.weighting == "prelec":
            if not 0 < self.prelec_shape < 1:
                raise ValueError("prelec_shape must lie in (0, 1) for an inverse-S curve")
            if not self.prelec_scale > 0:
                raise ValueError("prelec_scale must be positive")
        if self.K is not None and (int(self.K) != self.K or self.K < 1):
            raise ValueError("K must be a positive integer or None")
        if not self.choice_temperature > 0:
            raise ValueError("choice_temperature must be positive")

    @property
    def phi(self) -> tuple:
        return (self.alpha, self.beta, self.kappa, self.gamma)

    def with_phi(self, alpha, beta, kappa, gamma) -> "ProspectParams":
        return replace(self, alpha=float(alpha), beta=float(beta),
                       kappa=float(kappa), gamma=float(gamma))

    def neutralized(self, loss: bool = False, reference: bool = False,
                    probability: bool = False) -> "ProspectParams":
        """Switch the named mechanisms off (kappa=1, K=None, identity weighting)."""
        p = self
        if loss:
            p = replace(p, kappa=1.0)
        if reference:
            p = replace(p, K=None)
        if probability:
            p = replace(p, weighting="inverse_s", gamma=1.0, gamma_minus=None)
        return p

    def _w(self, p, minus: bool = False):
        if self.weighting == "prelec":
            return weight_prelec(p, self.prelec_shape, self.prelec_scale)
        g = self.gamma_minus if (minus and self.gamma_minus is not None) else self.gamma
        return weight_inverse_s(p, g)


TABLE4_DEFAULTS = ProspectParams()


def value_asym(gain, loss, p: ProspectParams):
    """``gain**alpha - kappa * loss**beta`` for non-negative magnitudes."""
    gain = np.asarray(gain, dtype=float)
    loss = np.asarray(loss, dtype=float)
    if np.any(gain < 0) or np.any(loss < 0):
        raise ValueError("gain and loss are magnitudes and must be >= 0")
    out = gain ** p.alpha - p.kappa * loss ** p.beta
    return float(out) if out.ndim == 0 else out


def _check_prob(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(~(p >= 0)) or np.any(~(p <= 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return p


def _finish(out, p0, p1, p):
    out = np.where(p0, 0.0, np.where(p1, 1.0, out))
    return float(out) if np.ndim(out) == 0 else out


def weight_inverse_s(p, gamma: float):
    """Inverse-S weighting ``p^g / (p^g + (1-p)^g)^(1/g)``."""
    p = _check_prob(p)
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if gamma == 1:
        return float(p) if p.ndim == 0 else p.copy()
    pc = np.clip(p, _EPS, 1 - _EPS)
    a = pc ** gamma
    # log form: the 1/gamma power overflows for very small gamma
    out = np.exp(gamma * np.log(pc) - np.log(a + (1 - pc) ** gamma) / gamma)
    return _finish(out, p == 0, p == 1, p)


def weight_prelec(p, shape: float, scale: float):
    """Prelec weighting ``exp(-scale * (-ln p)^shape)`` with ``w(0) = 0``."""
    p = _check_prob(p)
    if not shape > 0 or not scale > 0:
        raise ValueError("shape and scale must be positive")
    pc = np.clip(p, _EPS, 1.0)
    out = np.exp(-scale * (-np.log(pc)) ** shape)
    return _finish(out, p == 0, p == 1, p)


def weight(p, params: ProspectParams, minus: bool = False):
    return params._w(p, minus)


def reference_point(s, K: Optional[int]):
    """Quantize an acceptance score onto the grid ``{0, 1/K, ..., 1}``.

    ``K=None`` returns the score unchanged (continuous reference).
    """
    s = _check_prob(s)
    if K is None:
        return float(s) if s.ndim == 0 else s.copy()
    if int(K) != K or K < 1:
        raise ValueError("K must be a positive integer")
    # guard against K*s landing a few ulps under an integer
    r = np.floor(K * s + 1e-9) / K
    r = np.minimum(r, 1.0)
    return float(r) if r.ndim == 0 else r


def prospect_value(q, r, c, p: ProspectParams, lam: float):
    """Prospect utility from acceptance probability ``q``, reference ``r`` and raw cost ``c``."""
    gain = p._w(q) * (1 - r) ** p.alpha
    loss = p.kappa * p._w(1 - q, minus=True) * r ** p.beta
    if p.cost_in_loss:
        effort = p.kappa * (lam * c) ** p.beta
    else:
        effort = lam * c ** p.beta
    return gain - loss - effort


def prospect_utility(x, x2, r, f: LinearClassifier, cm: CostModel, p: ProspectParams):
    """Prospect utility of moving from ``x`` to ``x2`` given reference ``r``.

    Broadcasts: ``x2`` may be a stack of candidates sharing one origin.
    """
    q = f.score(x2)
    c = cm.cost(x, x2)
    out = prospect_value(q, np.asarray(r, dtype=float), c, p, cm.lam)
    return float(out) if np.ndim(out) == 0 else out


def rational_utility(x, x2, f: LinearClassifier, cm: CostModel):
    """Hard-label utility ``f(x2) - lam * c(x, x2)`` with ``f`` in {-1, +1}."""
    out = f.predict(x2) - cm.lam * cm.cost(x, x2)
    return float(out) if np.ndim(out) == 0 else out
