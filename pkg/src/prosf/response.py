"""Agent best responses: closed-form rational, candidate-set search, populations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .behavior import ProspectParams, prospect_utility, reference_point
from .model_core import CostModel, Dataset, LinearClassifier

__all__ = [
    "CandidateConfig",
    "CandidateSet",
    "AgentGroup",
    "PopulationSpec",
    "APPENDIX_GROUPS",
    "candidate_offsets",
    "generate_candidates",
    "best_response_rational",
    "rational_responses",
    "best_response_search",
    "prospect_responses",
    "assign_agents",
    "respond_population",
    "hashed_uniform",
    "hashed_normal",
]

MARGIN = 1e-6
TIE_TOL = 1e-12
RATIONAL = -1


@dataclass(frozen=True)
class CandidateConfig:
    """Lattice used for candidate-set search.

    ``max_cost=None`` resolves to ``1.5 * 2 / lam``, i.e. 1.5x the radius at
    which a rational agent stops manipulating.
    """

    n_dirs: int = 1
    n_mags: int = 60
    max_cost: Optional[float] = None
    seed: int = 0
    refine: bool = False

    def __post_init__(self):
        if self.n_dirs < 1 or self.n_mags < 1:
            raise ValueError("n_dirs and n_mags must be >= 1")
        if self.max_cost is not None and not self.max_cost > 0:
            raise ValueError("max_cost must be positive")

    def resolve_max_cost(self, cm: CostModel) -> float:
        return 3.0 / cm.lam if self.max_cost is None else float(self.max_cost)


@dataclass(frozen=True)
class CandidateSet:
    origin: np.ndarray
    candidates: np.ndarray  # row 0 is the origin
    costs: np.ndarray
    directions: np.ndarray  # (n_dirs, d), unit cost-length
    direction_index: np.ndarray  # -1 for the origin
    magnitudes: np.ndarray  # cost level of each candidate
    flagged: bool = False
    squared_cost: bool = False

    def step_for_cost(self, c):
        return np.sqrt(c) if self.squared_cost else c

    def __len__(self) -> int:
        return self.candidates.shape[0]


def _directions(f: LinearClassifier, cm: CostModel, n_dirs: int, seed: int):
    d = f.dimension
    w = f.weights
    flagged = False
    raw = []
    grad = None
    if cm.is_positive_definite and np.any(w):
        grad = np.linalg.solve(cm.metric, w)
    if grad is None or not np.all(np.isfinite(grad)):
        flagged = True
        grad = w.copy() if np.any(w) else np.eye(d)[0]
    raw.append(grad)

    def fresh(v):
        # parallel duplicates would put the same candidate in the set twice
        u = v / np.linalg.norm(v)
        return all(abs(u @ r) < (1 - 1e-9) * np.linalg.norm(r) for r in raw)

    for i in range(d):
        if len(raw) >= n_dirs:
            break
        e = np.zeros(d)
        e[i] = 1.0 if w[i] >= 0 else -1.0
        if fresh(e):
            raw.append(e)
    rng = np.random.default_rng(seed)
    while len(raw) < n_dirs:
        v = rng.standard_normal(d)
        if fresh(v):
            raw.append(v if v @ w >= 0 else -v)
    dirs = []
    for v in raw:
        n = np.sqrt(cm.quad_form(v))
        if not n > 1e-12:
            flagged = True
            n = np.linalg.norm(v)
        dirs.append(v / n)
    return np.array(dirs), flagged


def candidate_offsets(f: LinearClassifier, cm: CostModel, n_dirs: int = 1,
                      n_mags: int = 60, max_cost: Optional[float] = None, seed: int = 0):
    """Displacements shared by every origin: zero, then each direction at each cost level.

    Returns ``(offsets, directions, direction_index, magnitudes, flagged)``.
    """
    if n_dirs < 1 or n_mags < 1:
        raise ValueError("n_dirs and n_mags must be >= 1")
    max_cost = 3.0 / cm.lam if max_cost is None else float(max_cost)
    if not max_cost > 0:
        raise ValueError("max_cost must be positive")
    dirs, flagged = _directions(f, cm, n_dirs, seed)
    mags = max_cost * np.arange(1, n_mags + 1) / n_mags
    steps = cm.step_for_cost(mags)
    offsets = (dirs[:, None, :] * steps[None, :, None]).reshape(-1, f.dimension)
    offsets = np.vstack([np.zeros(f.dimension), offsets])
    didx = np.concatenate([[-1], np.repeat(np.arange(len(dirs)), n_mags)])
    m = np.concatenate([[0.0], np.tile(mags, len(dirs))])
    return offsets, dirs, didx, m, flagged


def generate_candidates(x, f: LinearClassifier, cm: CostModel, n_dirs: int = 1,
                        n_mags: int = 60, max_cost: Optional[float] = None,
                        seed: int = 0) -> CandidateSet:
    x = np.asarray(x, dtype=float)
    if x.shape != (f.dimension,):
        raise ValueError("origin dimension does not match classifier")
    offsets, dirs, didx, mags, flagged = candidate_offsets(f, cm, n_dirs, n_mags, max_cost, seed)
    cands = x + offsets
    cands[0] = x
    return CandidateSet(x, cands, cm.cost(x, cands), dirs, didx, mags, flagged, cm.squared)


def _config_candidates(x, f, cm, cfg: CandidateConfig) -> CandidateSet:
    return generate_candidates(x, f, cm, cfg.n_dirs, cfg.n_mags,
                               cfg.resolve_max_cost(cm), cfg.seed)


def rational_responses(X, f: LinearClassifier, cm: CostModel, margin: float = MARGIN) -> np.ndarray:
    """Closed-form hard-label best response for every row of ``X``.

    Rejected agents move along ``M^-1 w`` to ``margin`` logits past the
    boundary when that is worth it (``lam * cost < 2``), otherwise stay.
    """
    X = np.asarray(X, dtype=float)
    if not cm.is_positive_definite:
        raise ValueError("closed-form rational response needs a positive-definite metric")
    out = np.array(X, dtype=float, copy=True)
    w = f.weights
    if not np.any(w):
        return out
    v = np.linalg.solve(cm.metric, w)
    dn2 = float(w @ v)
    z = f.decision_function(X)
    gap = f.threshold_logit - z
    rejected = f.predict(X) < 0
    dist = np.maximum(gap, 0.0) / np.sqrt(dn2)
    c_star = dist ** 2 if cm.squared else dist
    move = rejected & (cm.lam * c_star < 2.0)
    if np.any(move):
        step = (gap[move] + margin) / dn2
        out[move] = X[move] + step[:, None] * v
    return out


def best_response_rational(x, f: LinearClassifier, cm: CostModel, margin: float = MARGIN) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (f.dimension,):
        raise ValueError("dimension mismatch")
    return rational_responses(x[None, :], f, cm, margin)[0]


def _choose(util: np.ndarray, costs: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties broken by lower cost, then earliest index."""
    util = np.where(np.isfinite(util), util, -np.inf)
    best = util.max(axis=-1, keepdims=True)
    if np.any(~np.isfinite(best)):
        raise ValueError("utility is non-finite on every candidate")
    near = util >= best - TIE_TOL
    key = np.where(near, costs, np.inf)
    return np.argmin(key, axis=-1)


def _refine(x, point, direction, mag, max_mag, util_at, step_for_cost, iters: int = 20,
            shrink: float = 0.5, step0: Optional[float] = None):
    """Pattern search on the cost level along the chosen direction."""
    step = step0 if step0 is not None else max(mag, max_mag / 10) * shrink
    best_u = util_at(point)
    for _ in range(iters):
        for m_try in (mag + step, mag - step):
            m_try = min(max(m_try, 0.0), max_mag)
            p_try = x + step_for_cost(m_try) * direction
            u = util_at(p_try)
            if u > best_u + TIE_TOL:
                best_u, mag, point = u, m_try, p_try
        step *= shrink
    return point


def best_response_search(x, utility: Callable, cs: CandidateSet, refine: bool = False) -> np.ndarray:
    """Maximize ``utility(x, candidates)`` over a candidate set.

    ``utility`` must broadcast over a stack of candidates and return one
    value per row.
    """
    x = np.asarray(x, dtype=float)
    if len(cs) == 0:
        raise ValueError("candidate set is empty")
    u = np.asarray(utility(x, cs.candidates), dtype=float).reshape(len(cs))
    k = int(_choose(u[None, :], cs.costs[None, :])[0])
    point = cs.candidates[k]
    if refine and cs.direction_index[k] >= 0:
        spacing = cs.magnitudes.max() / max(1, np.sum(cs.direction_index == cs.direction_index[k]))
        point = _refine(x, point, cs.directions[cs.direction_index[k]], float(cs.magnitudes[k]),
                        float(cs.magnitudes.max()),
                        lambda p: float(np.asarray(utility(x, p[None, :])).ravel()[0]),
                        cs.step_for_cost, step0=spacing / 2)
    return point.copy()



def prospect_responses(X, f: LinearClassifier, cm: CostModel, params: ProspectParams,
                       cfg: CandidateConfig = CandidateConfig(), r=None) -> np.ndarray:
    """Candidate-set prospect response for every row of ``X`` at once.

    Same arithmetic as mapping :func:`best_response_search` with the
    prospect utility over :func:`generate_candidates`; ``r`` defaults to the
    quantized score of each origin.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        return X.copy()
    if r is None:
        r = reference_point(f.score(X), params.K)
    r = np.asarray(r, dtype=float)
    max_cost = cfg.resolve_max_cost(cm)
    offsets, dirs, didx, mags, _ = candidate_offsets(f, cm, cfg.n_dirs, cfg.n_mags,
                                                     max_cost, cfg.seed)
    out = np.empty_like(X)
    # chunk to bound the (n, m, d) temporaries
    chunk = max(1, 2_000_000 // (offsets.shape[0] * X.shape[1]))
    for s in range(0, X.shape[0], chunk):
        Xs = X[s:s + chunk]
        C = Xs[:, None, :] + offsets[None, :, :]
        C[:, 0, :] = Xs
        costs = cm.cost(Xs[:, None, :], C)
        U = prospect_utility(Xs[:, None, :], C, r[s:s + chunk, None], f, cm, params)
        k = _choose(U, costs)
        out[s:s + chunk] = C[np.arange(len(Xs)), k]
        if cfg.refine:
            spacing = max_cost / cfg.n_mags
            for j in np.flatnonzero(didx[k] >= 0):
                i = s + j
                out[i] = _refine(X[i], out[i], dirs[didx[k[j]]], float(mags[k[j]]), max_cost,
                                 lambda p, i=i: float(prospect_utility(X[i], p, r[i], f, cm, params)),
                                 cm.step_for_cost, step0=spacing / 2)
    return out


@dataclass(frozen=True)
class AgentGroup:
    weight: float
    params: ProspectParams
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("group weight must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class PopulationSpec:
    """Rational share ``pi``; the rest split over prospect groups by weight."""

    pi: float = 0.0
    groups: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not 0 <= self.pi <= 1:
            raise ValueError("pi must lie in [0, 1]")
        if self.pi < 1 and not self.groups:
            raise ValueError("a population with pi < 1 needs at least one group")
        if self.groups and abs(sum(g.weight for g in self.groups) - 1) > 1e-9:
            raise ValueError("group weights must sum to 1")

    @classmethod
    def rational(cls) -> "PopulationSpec":
        return cls(1.0, ())

    @classmethod
    def prospect(cls, params: ProspectParams, noise_sigma: float = 0.0) -> "PopulationSpec":
        return cls(0.0, (AgentGroup(1.0, params, noise_sigma),))

    @classmethod
    def mixed(cls, pi: float, groups: Sequence[AgentGroup]) -> "PopulationSpec":
        return cls(pi, tuple(groups))


def _appendix_groups(noise_sigma: float = 0.0, base: ProspectParams = ProspectParams()):
    triples = [(2.00, 0.70), (2.25, 0.75), (1.80, 0.65)]
    return tuple(AgentGroup(1 / 3, ProspectParams(base.alpha, base.beta, k, g, K=base.K,
                                                  cost_in_loss=base.cost_in_loss),
                            noise_sigma) for k, g in triples)


APPENDIX_GROUPS = _appendix_groups()


_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def hashed_uniform(seed: int, index, stream: int = 0) -> np.ndarray:
    """Counter-based uniforms in [0, 1) keyed by ``(seed, stream, index)``."""
    idx = np.asarray(index).astype(np.uint64)
    key = _mix(_mix(np.array([seed], dtype=np.uint64) & _MASK) ^ np.uint64(stream))
    z = _mix(key ^ _mix(idx))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def hashed_normal(seed: int, index, stream: int = 0) -> np.ndarray:
    u1 = hashed_uniform(seed, index, 2 * stream + 101)
    u2 = hashed_uniform(seed, index, 2 * stream + 102)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2 * np.pi * u2)


def assign_agents(n: int, spec: PopulationSpec, seed: int) -> np.ndarray:
    """Per-example identity: ``-1`` for rational, else the group index."""
    idx = np.arange(n)
    rational = hashed_uniform(seed, idx, 0) < spec.pi
    out = np.full(n, RATIONAL)
    if spec.groups:
        cum = np.cumsum([g.weight for g in spec.groups])
        cum[-1] = 1.0
        g = np.searchsorted(cum, hashed_uniform(seed, idx, 1), side="right")
        out = np.where(rational, RATIONAL, np.minimum(g, len(spec.groups) - 1))
    return out


def respond_population(data: Dataset, f: LinearClassifier, cm: CostModel, spec: PopulationSpec,
                       seed: int = 0, candidates: CandidateConfig = CandidateConfig(),
                       return_assignment: bool = False):
    """Manipulated copy of ``data``; labels pass through unchanged."""
    X = data.X
    n, d = X.shape
    who = assign_agents(n, spec, seed)
    out = np.array(X, dtype=float, copy=True)
    rat = who == RATIONAL
    if np.any(rat):
        out[rat] = rational_responses(X[rat], f, cm)
    for gi, group in enumerate(spec.groups):
        sel = np.flatnonzero(who == gi)
        if len(sel) == 0:
            continue
        out[sel] = prospect_responses(X[sel], f, cm, group.params, candidates)
        if group.noise_sigma > 0:
            flat = sel[:, None] * d + np.arange(d)[None, :]
            out[sel] += group.noise_sigma * hashed_normal(seed, flat, 7)
    result = data.with_features(out)
    return (result, who) if return_assignment else result
