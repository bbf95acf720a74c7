"""Behavioral-parameter estimation from observed manipulation pairs.

Agents are modeled as choosing among a finite candidate set with a softmax
(Boltzmann) rule on prospect utility; ``phi = (alpha, beta, kappa, gamma)``
is fitted by maximum likelihood with a coarse grid followed by Nelder-Mead.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit, logsumexp
from sklearn.base import BaseEstimator

from .behavior import ProspectParams, reference_point
from .model_core import CostModel, LinearClassifier
from .response import CandidateConfig, candidate_offsets, prospect_responses, rational_responses

__all__ = [
    "ManipulationPair",
    "FitResult",
    "PairCandidates",
    "build_candidates",
    "choice_log_likelihood",
    "fit_parameters",
    "simulate_pairs",
    "manipulation_deviation",
    "predict_after",
    "NEUTRAL_PHI",
    "KAPPA_MAX",
    "MIN_PAIRS",
    "read_pairs_csv",
    "write_pairs_csv",
    "ProspectParameterEstimator",
]

KAPPA_MAX = 4.0
MIN_PAIRS = 30
SNAP_FRACTION = 0.1
NEUTRAL_PHI = (1.0, 1.0, 1.01, 1.0)

GRID_ALPHA = np.round(np.arange(0.6, 1.0 + 1e-9, 0.05), 10)
GRID_BETA = GRID_ALPHA
GRID_KAPPA = np.round(np.arange(1.1, 3.0 + 1e-9, 0.1), 10)
GRID_GAMMA = np.round(np.arange(0.5, 1.0 + 1e-9, 0.05), 10)


@dataclass(frozen=True)
class ManipulationPair:
    before: np.ndarray
    after: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.before, dtype=float).ravel()
        a = np.asarray(self.after, dtype=float).ravel()
        if b.shape != a.shape:
            raise ValueError(f"before has {b.size} features but after has {a.size}")
        object.__setattr__(self, "before", b)
        object.__setattr__(self, "after", a)


@dataclass
class FitResult:
    params: ProspectParams
    log_likelihood: float
    optimizer_trace: List[Tuple[Tuple[float, float, float, float], float]]
    converged: bool
    n_pairs: int
    flags: Tuple[str, ...] = ()
    candidates: dict = field(default_factory=dict)

    @property
    def phi(self) -> tuple:
        return self.params.phi

    def report(self) -> str:
        a, b, k, g = self.phi
        lines = [
            "behavioral parameter fit",
            f"  pairs           {self.n_pairs}",
            f"  alpha           {a:.4f}",
            f"  beta            {b:.4f}",
            f"  kappa           {k:.4f}",
            f"  gamma           {g:.4f}",
            f"  log-likelihood  {self.log_likelihood:.6f}",
            f"  converged       {self.converged}",
            f"  flags           {', '.join(self.flags) if self.flags else 'none'}",
            f"  K               {self.params.K}",
            f"  weighting       {self.params.weighting}",
            f"  temperature     {self.params.choice_temperature}",
            f"  cost_in_loss    {self.params.cost_in_loss}",
            "  candidates      " + ", ".join(f"{k}={v}" for k, v in self.candidates.items()),
        ]
        return "\n".join(lines) + "\n"

    def to_record(self) -> dict:
        a, b, k, g = self.phi
        return {
            "alpha": a, "beta": b, "kappa": k, "gamma": g,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "n_pairs": self.n_pairs,
            "flags": list(self.flags),
            "fixed": {"K": self.params.K, "weighting": self.params.weighting,
                      "choice_temperature": self.params.choice_temperature,
                      "cost_in_loss": self.params.cost_in_loss,
                      "prelec_shape": self.params.prelec_shape,
                      "prelec_scale": self.params.prelec_scale},
            "candidates": dict(self.candidates),
            "trace": [{"phi": list(p), "log_likelihood": ll} for p, ll in self.optimizer_trace],
        }


@dataclass(frozen=True)
class PairCandidates:
    """Candidate sets for a batch of pairs sharing one lattice of offsets.

    ``scores`` is (n, m), ``costs`` is (m,), ``chosen`` indexes the snapped
    after-point of each pair and ``r`` is the unquantized origin score.
    """

    scores: np.ndarray
    costs: np.ndarray
    chosen: np.ndarray
    origin_scores: np.ndarray
    lam: float
    config: CandidateConfig


def _lattice(f: LinearClassifier, cm: CostModel, cfg: CandidateConfig):
    offsets, _, _, _, _ = candidate_offsets(f, cm, cfg.n_dirs, cfg.n_mags,
                                            cfg.resolve_max_cost(cm), cfg.seed)
    return offsets


def _min_spacing(offsets: np.ndarray, cm: CostModel) -> float:
    diff = offsets[:, None, :] - offsets[None, :, :]
    D = np.sqrt(cm.quad_form(diff))
    D[np.diag_indices_from(D)] = np.inf
    return float(D.min()) if len(offsets) > 1 else np.inf


def build_candidates(pairs: Sequence[ManipulationPair], f: LinearClassifier, cm: CostModel,
                     cfg: CandidateConfig = CandidateConfig()) -> PairCandidates:
    """Build each pair's candidate set and snap its after-point onto it."""
    if len(pairs) == 0:
        raise ValueError("no manipulation pairs given")
    B = np.array([p.before for p in pairs])
    A = np.array([p.after for p in pairs])
    if B.shape[1] != f.dimension:
        raise ValueError("pair dimension does not match classifier")
    offsets = _lattice(f, cm, cfg)
    tol = SNAP_FRACTION * _min_spacing(offsets, cm)
    chosen = np.empty(len(pairs), dtype=int)
    for i in range(len(pairs)):
        dist = np.sqrt(cm.quad_form(A[i] - offsets - B[i]))
        k = int(np.argmin(dist))
        if not dist[k] <= tol:
            raise ValueError(f"pair {i}: after-point is {dist[k]:.3g} from the nearest candidate "
                             f"(snap tolerance {tol:.3g})")
        chosen[i] = k
    C = B[:, None, :] + offsets[None, :, :]
    C[:, 0, :] = B
    scores = f.score(C)
    return PairCandidates(scores, cm.cost(np.zeros(f.dimension), offsets), chosen,
                          f.score(B), cm.lam, cfg)


def _utilities(pc: PairCandidates, params: ProspectParams) -> np.ndarray:
    r = reference_point(pc.origin_scores, params.K)[:, None]
    q = pc.scores
    gain = params._w(q) * (1 - r) ** params.alpha
    loss = params.kappa * params._w(1 - q, minus=True) * r ** params.beta
    if params.cost_in_loss:
        effort = params.kappa * (pc.lam * pc.costs) ** params.beta
    else:
        effort = pc.lam * pc.costs ** params.beta
    return gain - loss - effort[None, :]


def _loglik_from_utilities(U: np.ndarray, chosen: np.ndarray, tau: float) -> float:
    Z = tau * U
    picked = Z[np.arange(len(chosen)), chosen]
    # logsumexp subtracts the row max internally
    return float(np.sum(picked - logsumexp(Z, axis=1)))


def choice_log_likelihood(pairs, f: LinearClassifier, cm: CostModel, phi: ProspectParams,
                          candidates: CandidateConfig = CandidateConfig()) -> float:
    """Softmax choice log-likelihood of the observed after-points.

    ``pairs`` may also be a prebuilt :class:`PairCandidates`.
    """
    pc = pairs if isinstance(pairs, PairCandidates) else build_candidates(pairs, f, cm, candidates)
    U = _utilities(pc, phi)
    return _loglik_from_utilities(U, pc.chosen, phi.choice_temperature)


def _grid_search(pc: PairCandidates, fixed: ProspectParams):
    """Exhaustive grid; the kappa axis is vectorized since U is affine in kappa."""
    tau = fixed.choice_temperature
    r = reference_point(pc.origin_scores, fixed.K)[:, None]
    q = pc.scores
    rows = np.arange(len(pc.chosen))
    kap = GRID_KAPPA[:, None, None]
    best = (-np.inf, None)
    for g in GRID_GAMMA:
        p = fixed.with_phi(1.0, 1.0, 1.0, g)
        wq, wl = p._w(q), p._w(1 - q, minus=True)
        for a in GRID_ALPHA:
            gain = wq * (1 - r) ** a
            for b in GRID_BETA:
                lossw = wl * r ** b
                if fixed.cost_in_loss:
                    U = gain[None] - kap * (lossw[None] + ((pc.lam * pc.costs) ** b)[None, None, :])
                else:
                    U = gain[None] - kap * lossw[None] - (pc.lam * pc.costs ** b)[None, None, :]
                Z = tau * U
                ll = np.sum(Z[:, rows, pc.chosen] - logsumexp(Z, axis=2), axis=1)
                k = int(np.argmax(ll))
                if ll[k] > best[0]:
                    best = (float(ll[k]), (float(a), float(b), float(GRID_KAPPA[k]), float(g)))
    return best


def _to_z(phi, kappa_max):
    a, b, k, g = phi
    eps = 1e-6
    return np.array([logit(min(a, 1 - eps)), logit(min(b, 1 - eps)),
                     logit(min((k - 1) / (kappa_max - 1), 1 - eps)), logit(min(g, 1 - eps))])


def _from_z(z, kappa_max):
    a, b, k, g = expit(z)
    return (float(a), float(b), float(1 + (kappa_max - 1) * k), float(g))


def _on_edge(phi) -> bool:
    a, b, k, g = phi
    return (a in (GRID_ALPHA[0], GRID_ALPHA[-1]) or b in (GRID_BETA[0], GRID_BETA[-1])
            or k in (GRID_KAPPA[0], GRID_KAPPA[-1]) or g in (GRID_GAMMA[0], GRID_GAMMA[-1]))


def fit_parameters(pairs, f: LinearClassifier, cm: CostModel,
                   fixed: ProspectParams = ProspectParams(), seed: int = 0,
                   candidates: CandidateConfig = CandidateConfig(),
                   kappa_max: float = KAPPA_MAX, maxiter: int = 400) -> FitResult:
    """Maximum-likelihood ``(alpha, beta, kappa, gamma)`` with the other fields of ``fixed`` held.

    Grid search over the box, then Nelder-Mead in logit space started from
    the grid optimum. The procedure has no random component; ``seed`` is
    only recorded. The lattice must be the one the pairs were observed on,
    so its seed comes from ``candidates``.
    """
    if not kappa_max > GRID_KAPPA[-1]:
        raise ValueError("kappa_max must exceed the top of the kappa grid")
    pc = pairs if isinstance(pairs, PairCandidates) else build_candidates(pairs, f, cm, candidates)
    n = len(pc.chosen)
    flags = []
    if n < MIN_PAIRS:
        flags.append("low_data")
    grid_ll, grid_phi = _grid_search(pc, fixed)
    if grid_phi is None or not np.isfinite(grid_ll):
        raise ValueError("log-likelihood is -inf everywhere on the grid (degenerate candidate sets)")
    trace = [(grid_phi, grid_ll)]
    best = [grid_ll, grid_phi]

    def negll(z):
        phi = _from_z(z, kappa_max)
        if phi[2] <= 1.0:
            return np.inf
        ll = _loglik_from_utilities(_utilities(pc, fixed.with_phi(*phi)), pc.chosen,
                                    fixed.choice_temperature)
        if ll > best[0]:
            best[0], best[1] = ll, phi
            trace.append((phi, ll))
        return -ll

    res = minimize(negll, _to_z(grid_phi, kappa_max), method="Nelder-Mead",
                   options={"maxiter": maxiter, "xatol": 1e-4, "fatol": 1e-8})
    if _on_edge(grid_phi):
        flags.append("grid_edge")
    if best[1] == grid_phi:
        flags.append("no_refinement_gain")
    cand = asdict(candidates)
    cand["fit_seed"] = seed
    cand["max_cost"] = candidates.resolve_max_cost(cm)
    return FitResult(fixed.with_phi(*best[1]), float(best[0]), trace, bool(res.success), n,
                     tuple(flags), cand)


def simulate_pairs(X, f: LinearClassifier, cm: CostModel, phi: ProspectParams,
                   candidates: CandidateConfig = CandidateConfig(), seed: int = 0):
    """Draw one softmax choice per row of ``X`` from its candidate set."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    offsets = _lattice(f, cm, candidates)
    C = X[:, None, :] + offsets[None, :, :]
    C[:, 0, :] = X
    pc = PairCandidates(f.score(C), cm.cost(np.zeros(f.dimension), offsets),
                        np.zeros(len(X), dtype=int), f.score(X), cm.lam, candidates)
    Z = phi.choice_temperature * _utilities(pc, phi)
    P = np.exp(Z - logsumexp(Z, axis=1, keepdims=True))
    u = np.random.default_rng(seed).random(len(X))
    idx = np.minimum((np.cumsum(P, axis=1) < u[:, None]).sum(axis=1), P.shape[1] - 1)
    return [ManipulationPair(X[i], C[i, idx[i]]) for i in range(len(X))]


def manipulation_deviation(pairs: Sequence[ManipulationPair], predicted) -> float:
    """Mean Euclidean distance between observed and predicted after-points."""
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    if len(pairs) != len(predicted):
        raise ValueError(f"{len(pairs)} pairs but {len(predicted)} predictions")
    if len(pairs) == 0:
        raise ValueError("no pairs given")
    A = np.array([p.after for p in pairs])
    return float(np.mean(np.linalg.norm(A - predicted, axis=1)))


def predict_after(pairs: Sequence[ManipulationPair], f: LinearClassifier, cm: CostModel,
                  model="rational", candidates: CandidateConfig = CandidateConfig()) -> np.ndarray:
    """Model-predicted after-points: ``"rational"`` or a :class:`ProspectParams`."""
    B = np.array([p.before for p in pairs])
    if isinstance(model, str):
        if model != "rational":
            raise ValueError("model must be 'rational' or ProspectParams")
        return rational_responses(B, f, cm)
    return prospect_responses(B, f, cm, model, candidates)


def write_pairs_csv(pairs: Sequence[ManipulationPair], path) -> None:
    d = len(pairs[0].before) if pairs else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"before_{j}" for j in range(d)] + [f"after_{j}" for j in range(d)])
        for p in pairs:
            wr.writerow([repr(float(v)) for v in p.before] + [repr(float(v)) for v in p.after])


def read_pairs_csv(path) -> List[ManipulationPair]:
    """Two-block CSV: the first half of the columns are before-features, the rest after-features."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty pairs file")
    header = rows[0]
    if len(header) == 0 or len(header) % 2:
        raise ValueError(f"{path}: header must have an even, nonzero number of columns")
    d = len(header) // 2
    pairs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2 * d:
            raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {2 * d}")
        try:
            vals = np.array([float(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"{path}: row {lineno}: {exc}") from None
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"{path}: row {lineno}: non-finite value")
        pairs.append(ManipulationPair(vals[:d], vals[d:]))
    if not pairs:
        raise ValueError(f"{path}: no data rows")
    return pairs


class ProspectParameterEstimator(BaseEstimator):
    """Estimator wrapper around :func:`fit_parameters`.

    ``fit(X_before, X_after)`` takes the two blocks as arrays. The deployed
    classifier and cost model the agents responded to must be supplied.
    """

    def __init__(self, classifier=None, cost_model=None, K=5, weighting="inverse_s",
                 choice_temperature=5.0, cost_in_loss=True, n_dirs=1, n_mags=60,
                 max_cost=None, kappa_max=KAPPA_MAX, random_state=0):
        self.classifier = classifier
        self.cost_model = cost_model
        self.K = K
        self.weighting = weighting
        self.choice_temperature = choice_temperature
        self.cost_in_loss = cost_in_loss
        self.n_dirs = n_dirs
        self.n_mags = n_mags
        self.max_cost = max_cost
        self.kappa_max = kappa_max
        self.random_state = random_state

    def fit(self, X, y):
        if self.classifier is None or self.cost_model is None:
            raise ValueError("classifier and cost_model must be set before fit")
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape != y.shape:
            raise ValueError("before and after blocks must have the same shape")
        pairs = [ManipulationPair(b, a) for b, a in zip(X, y)]
        fixed = ProspectParams(K=self.K, weighting=self.weighting,
                               choice_temperature=self.choice_temperature,
                               cost_in_loss=self.cost_in_loss)
        cfg = CandidateConfig(self.n_dirs, self.n_mags, self.max_cost, self.random_state)
        self.result_ = fit_parameters(pairs, self.classifier, self.cost_model, fixed,
                                      self.random_state, cfg, self.kappa_max)
        self.params_ = self.result_.params
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, y):
        """Mean per-pair log-likelihood under the fitted parameters."""
        pairs = [ManipulationPair(b, a) for b, a in zip(np.asarray(X), np.asarray(y))]
        cfg = CandidateConfig(self.n_dirs, self.n_mags, self.max_cost, self.random_state)
        return choice_log_likelihood(pairs, self.classifier, self.cost_model, self.params_,
                                     cfg) / len(pairs)
