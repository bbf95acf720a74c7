"""Experiment configs and the runners behind the command-line tool.

A config is a JSON object; every section is optional and unknown keys are
rejected. Defaults describe the desk-scale synthetic setting used by the
acceptance suite.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from .behavior import ProspectParams
from .data import (NormalizationRecord, SyntheticSpec, generate_synthetic, load_csv, load_schema,
                   normalize)
from .inference import NEUTRAL_PHI, choice_log_likelihood, fit_parameters, simulate_pairs
from .learning import STAGES, TrainingConfig, behavioral_sweep, stage_params, train_strategic
from .metrics import EvalReport, evaluate
from .model_core import CostModel, Dataset, LinearClassifier, train_logistic
from .response import AgentGroup, CandidateConfig, PopulationSpec, respond_population

__all__ = [
    "DEFAULT_CONFIG",
    "ABLATION_MASKS",
    "MECHANISM_NAMES",
    "ExperimentConfig",
    "load_config",
    "fingerprint",
    "SeedContext",
    "prepare",
    "fit_defender",
    "population",
    "run_grid",
    "run_mixed",
    "run_ablation",
    "run_sweep",
    "run_stages",
    "run_dynamics",
    "run_recovery",
    "summarize",
    "worker_count",
    "WORKERS_ENV",
]

WORKERS_ENV = "PROSF_WORKERS"

# short names used in configs and result rows
MECHANISM_NAMES = {"Los": "loss_aversion", "Refe": "reference_bias", "Prob": "probability_distortion"}
ABLATION_MASKS = (
    ("Refe", "Prob"), ("Refe", "Los"), ("Prob", "Los"),
    ("Refe",), ("Prob",), ("Los",),
    ("Refe", "Prob", "Los"),
)
APPENDIX_TRIPLE = [[2.00, 0.70], [2.25, 0.75], [1.80, 0.65]]

DEFAULT_CONFIG: dict = {
    "name": "synthetic",
    "dataset": {
        "synthetic": {"n": 4000, "d": 10, "class_separation": 2.0, "label_noise": 0.0},
        "csv": None,
        "schema": None,
        "test_fraction": 0.5,
        "normalize": False,
    },
    # metric = scale^2 * I unless an explicit matrix is given
    "cost": {"lam": 3.5e-4, "scale": 1.0e4, "metric": None, "squared": False},
    "prospect": {"alpha": 0.8, "beta": 0.7, "kappa": 2.25, "gamma": 0.7,
                 "weighting": "inverse_s", "prelec_shape": 0.68, "prelec_scale": 1.0,
                 "K": 5, "cost_in_loss": False, "choice_temperature": 5.0},
    "agents": {"pi": 0.2, "groups": APPENDIX_TRIPLE, "noise_sigma": 0.0},
    "defender": "pro-sf",
    "training": {"outer_iters": 20, "inner_lr": 0.5, "inner_epochs": 200, "tol": 1e-4, "l2": 1e-3},
    "candidates": {"n_dirs": 1, "n_mags": 60, "max_cost": None, "refine": False},
    "sweep": {"param": "kappa", "values": [1.75, 2.0, 2.25, 2.5, 2.75]},
    "mixed_pis": [0.1, 0.2, 0.4],
    "recovery": {"n_pairs": 500, "d": 3, "lam": 0.05, "n_dirs": 3, "n_mags": 20,
                 "levels": [-3.0, 0.6, 1.6], "K": 5, "cost_in_loss": True,
                 "phi": [0.8, 0.7, 2.25, 0.7], "choice_temperature": 5.0},
    "seeds": list(range(10)),
}

SWEEPABLE = ("alpha", "beta", "kappa", "gamma", "K", "weighting", "pi", "alpha_beta")


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ValueError(f"unknown config key {where!r}")
        if isinstance(base[k], dict) and v is not None:
            if not isinstance(v, dict):
                raise ValueError(f"config key {where!r} must be an object")
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(cfg: dict) -> str:
    """Short hash of the canonicalized config (seeds excluded, they are a row column)."""
    body = {k: v for k, v in cfg.items() if k != "seeds"}
    return hashlib.sha256(_canonical(body).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: Optional[dict] = None) -> "ExperimentConfig":
        cfg = _merge(DEFAULT_CONFIG, d or {})
        out = cls(cfg)
        out.validate()
        return out

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.raw)

    @property
    def seeds(self) -> List[int]:
        return [int(s) for s in self.raw["seeds"]]

    def with_overrides(self, **sections) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_merge(self.raw, sections))

    def validate(self) -> None:
        self.prospect_params()
        self.training_config(0)
        self.candidate_config(0)
        ds = self.raw["dataset"]
        if (ds["csv"] is None) != (ds["schema"] is None):
            raise ValueError("dataset.csv and dataset.schema must be given together")
        if ds["csv"] is None:
            SyntheticSpec(**ds["synthetic"])
        if not 0 < ds["test_fraction"] < 1:
            raise ValueError("dataset.test_fraction must lie in (0, 1)")
        pi = self.raw["agents"]["pi"]
        if not 0 <= pi <= 1:
            raise ValueError("agents.pi must lie in [0, 1]")
        for p in self.raw["mixed_pis"]:
            if not 0 <= p <= 1:
                raise ValueError("mixed_pis entries must lie in [0, 1]")
        parse_variant(self.raw["defender"])
        if not self.raw["seeds"]:
            raise ValueError("seeds must be nonempty")
        sw = self.raw["sweep"]
        if sw["param"] not in SWEEPABLE + ("stages",):
            raise ValueError(f"sweep.param must be one of {SWEEPABLE + ('stages',)}")

    def prospect_params(self) -> ProspectParams:
        return ProspectParams(**self.raw["prospect"])

    def training_config(self, seed: int) -> TrainingConfig:
        return TrainingConfig(seed=seed, **self.raw["training"])

    def candidate_config(self, seed: int) -> CandidateConfig:
        return CandidateConfig(seed=seed, **self.raw["candidates"])

    def cost_model(self, d: int) -> CostModel:
        c = self.raw["cost"]
        M = np.eye(d) * float(c["scale"]) ** 2 if c["metric"] is None else np.asarray(c["metric"], float)
        if M.shape != (d, d):
            raise ValueError(f"cost.metric must be {d}x{d}")
        return CostModel(M, c["lam"], c["squared"])


def load_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config must be a JSON object")
    cfg = ExperimentConfig.from_dict(raw)
    return cfg.with_overrides(**overrides) if overrides else cfg


def worker_count() -> int:
    v = os.environ.get(WORKERS_ENV)
    if v is None:
        return 1
    n = int(v)
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer")
    return n


def parse_variant(v) -> Tuple[str, Tuple[str, ...]]:
    """Normalize a defender spec to ``(label, enabled_stages)``.

    ``"rational"`` trains against rational agents; ``"pro-sf"`` against
    prospect agents with every mechanism on; a list of short mechanism names
    (``Los``, ``Refe``, ``Prob``) keeps only those mechanisms.
    """
    if v == "rational":
        return "rational", ()
    if v in ("pro-sf", "full"):
        return "pro-sf", tuple(STAGES)
    if isinstance(v, (list, tuple)):
        bad = [m for m in v if m not in MECHANISM_NAMES]
        if bad or len(set(v)) != len(v):
            raise ValueError(f"ablation mask must use distinct names from {sorted(MECHANISM_NAMES)}")
        if not v:
            return "none", ()
        label = "full" if len(v) == 3 else "+".join(v)
        return label, tuple(MECHANISM_NAMES[m] for m in v)
    raise ValueError(f"unknown defender {v!r}")


@dataclass(frozen=True)
class SeedContext:
    train: Dataset
    test: Dataset
    cm: CostModel
    f_clean: LinearClassifier
    normalization: Optional[NormalizationRecord]
    seed: int


def load_dataset(cfg: ExperimentConfig, seed: int) -> Dataset:
    ds = cfg["dataset"]
    if ds["csv"] is not None:
        return load_csv(ds["csv"], load_schema(ds["schema"]))
    return generate_synthetic(SyntheticSpec(seed=seed, **ds["synthetic"]))


def prepare(cfg: ExperimentConfig, seed: int) -> SeedContext:
    ds = cfg["dataset"]
    data = load_dataset(cfg, seed)
    tf = ds["test_fraction"]
    if ds["csv"] is None:
        # synthetic draws are i.i.d., so a prefix split is already random
        n_test = int(round(tf * len(data)))
        train, test = data.subset(slice(0, len(data) - n_test)), data.subset(slice(len(data) - n_test, None))
    else:
        idx_tr, idx_te = train_test_split(np.arange(len(data)), test_size=tf, random_state=seed,
                                          stratify=data.y)
        train, test = data.subset(np.sort(idx_tr)), data.subset(np.sort(idx_te))
    rec = None
    if ds["normalize"]:
        train, rec = normalize(train)
        test = rec.apply(test)
    tc = cfg.training_config(seed)
    f_clean = train_logistic(train, tc.inner_lr, tc.inner_epochs, seed, tc.l2)
    return SeedContext(train, test, cfg.cost_model(train.dimension), f_clean, rec, seed)


def _groups(cfg: ExperimentConfig, base: ProspectParams) -> Tuple[AgentGroup, ...]:
    ag = cfg["agents"]
    triples = ag["groups"]
    if not triples:
        return (AgentGroup(1.0, base, ag["noise_sigma"]),)
    w = 1.0 / len(triples)
    return tuple(AgentGroup(w, replace(base, kappa=float(k), gamma=float(g)), ag["noise_sigma"])
                 for k, g in triples)


def population(cfg: ExperimentConfig, paradigm: str, pi: Optional[float] = None,
               base: Optional[ProspectParams] = None) -> PopulationSpec:
    """Agent population for ``rational``, ``non-rational`` or ``mixed`` (uses ``agents.pi``)."""
    base = cfg.prospect_params() if base is None else base
    if paradigm == "rational":
        return PopulationSpec.rational()
    groups = _groups(cfg, base)
    if paradigm == "non-rational":
        return PopulationSpec(0.0, groups)
    if paradigm == "mixed":
        return PopulationSpec(cfg["agents"]["pi"] if pi is None else pi, groups)
    raise ValueError(f"unknown agent paradigm {paradigm!r}")


def fit_defender(ctx: SeedContext, cfg: ExperimentConfig, variant, base: Optional[ProspectParams] = None):
    """Train one defender; returns ``(label, classifier, trace)``."""
    label, enabled = parse_variant(variant)
    base = cfg.prospect_params() if base is None else base
    if label == "rational":
        agents = PopulationSpec.rational()
    else:
        agents = PopulationSpec.prospect(stage_params(base, enabled))
    f, trace = train_strategic(ctx.train, ctx.cm, agents, cfg.training_config(ctx.seed),
                               cfg.candidate_config(ctx.seed))
    return label, f, trace


def _deploy(ctx: SeedContext, cfg: ExperimentConfig, f: LinearClassifier, agents: PopulationSpec) -> EvalReport:
    deployed = respond_population(ctx.test, f, ctx.cm, agents, ctx.seed, cfg.candidate_config(ctx.seed))
    return evaluate(f, ctx.test, deployed, ctx.f_clean, ctx.cm)


def _row(cfg, ctx, report: EvalReport, paradigm, variant, t0, **extra) -> dict:
    row = report.row(cfg["name"], paradigm, variant, ctx.seed)
    row.update(extra)
    row["fingerprint"] = cfg.fingerprint
    row["seconds"] = round(time.perf_counter() - t0, 3)
    return row


def _map_seeds(fn: Callable[[int], List[dict]], seeds: Sequence[int], workers: Optional[int] = None):
    workers = worker_count() if workers is None else workers
    if workers == 1:
        chunks = [fn(s) for s in seeds]
    else:
        with ThreadPoolExecutor(workers) as ex:
            chunks = list(ex.map(fn, seeds))
    return [r for c in chunks for r in c]


PARADIGMS = ("rational", "non-rational", "mixed")


def run_grid(cfg: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
             defenders=("rational", "pro-sf"), paradigms=PARADIGMS, workers=None) -> List[dict]:
    """Defenders x agent paradigms, one row per cell and seed."""
    def one(seed):
        ctx = prepare(cfg, seed)
        rows = []
        for d in defenders:
            t0 = time.perf_counter()
            label, f, _ = fit_defender(ctx, cfg, d)
            for p in paradigms:
                rows.append(_row(cfg, ctx, _deploy(ctx, cfg, f, population(cfg, p)), p, label, t0))
        return rows
    return _map_seeds(one, cfg.seeds if seeds is None else seeds, workers)


def run_mixed(cfg: ExperimentConfig, seeds=None, pis=None, workers=None) -> List[dict]:
    """Both defenders under mixed populations at several rational proportions."""
    pis = cfg["mixed_pis"] if pis is None else pis

    def one(seed):
        ctx = prepare(cfg, seed)
        rows = []
        for d in ("rational", "pro-sf"):
            t0 = time.perf_counter()
            label, f, _ = fit_defender(ctx, cfg, d)
            for pi in pis:
                rep = _deploy(ctx, cfg, f, population(cfg, "mixed", pi))
                rows.append(_row(cfg, ctx, rep, "mixed", label, t0, param="pi", value=pi))
        return rows
    return _map_seeds(one, cfg.seeds if seeds is None else seeds, workers)


def run_ablation(cfg: ExperimentConfig, seeds=None, masks=ABLATION_MASKS, workers=None) -> List[dict]:
    """Every non-empty mechanism mask as defender, evaluated on mixed agents."""
    def one(seed):
        ctx = prepare(cfg, seed)
        rows = []
        agents = population(cfg, "mixed")
        for m in masks:
            t0 = time.perf_counter()
            label, f, _ = fit_defender(ctx, cfg, list(m))
            rows.append(_row(cfg, ctx, _deploy(ctx, cfg, f, agents), "mixed", label, t0))
        return rows
    return _map_seeds(one, cfg.seeds if seeds is None else seeds, workers)


def _swept_params(base: ProspectParams, param: str, value) -> ProspectParams:
    if param == "alpha_beta":
        a, b = value
        return replace(base, alpha=float(a), beta=float(b))
    if param == "weighting":
        return replace(base, weighting=str(value))
    if param == "K":
        return replace(base, K=None if value is None else int(value))
    return replace(base, **{param: float(value)})


def run_sweep(cfg: ExperimentConfig, param: Optional[str] = None, values=None, seeds=None,
              workers=None) -> List[dict]:
    """Pro-SF accuracy on mixed agents as one behavioral parameter varies.

    The defender and the agents share the swept value (matched settings),
    except for ``pi`` which only changes the population.
    """
    sw = cfg["sweep"]
    param = sw["param"] if param is None else param
    values = sw["values"] if values is None else values
    if not values:
        raise ValueError("sweep grid is empty")
    if param == "stages":
        return run_stages(cfg, seeds, workers)
    if param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {param!r}; choose from {SWEEPABLE}")

    def one(seed):
        ctx = prepare(cfg, seed)
        rows = []
        if param == "pi":
            t0 = time.perf_counter()
            label, f, _ = fit_defender(ctx, cfg, "pro-sf")
        for v in values:
            if param == "pi":
                agents = population(cfg, "mixed", float(v))
            else:
                t0 = time.perf_counter()
                base = _swept_params(cfg.prospect_params(), param, v)
                label, f, _ = fit_defender(ctx, cfg, "pro-sf", base)
                agents = population(cfg, "mixed", base=base)
            rows.append(_row(cfg, ctx, _deploy(ctx, cfg, f, agents), "mixed", label, t0,
                             param=param, value=json.dumps(v)))
        return rows
    return _map_seeds(one, cfg.seeds if seeds is None else seeds, workers)


def run_stages(cfg: ExperimentConfig, seeds=None, workers=None) -> List[dict]:
    """Rational-trained accuracy as biases are enabled cumulatively."""
    def one(seed):
        ctx = prepare(cfg, seed)
        t0 = time.perf_counter()
        _, f, _ = fit_defender(ctx, cfg, "rational")
        rows = []
        for stage, acc in behavioral_sweep(ctx.train, ctx.cm, cfg.prospect_params(), STAGES,
                                           cfg.training_config(seed), cfg.candidate_config(seed),
                                           eval_data=ctx.test, classifier=f):
            row = {"dataset": cfg["name"], "seed": seed, "stage": stage, "accuracy": acc,
                   "fingerprint": cfg.fingerprint, "seconds": round(time.perf_counter() - t0, 3)}
            rows.append(row)
        return rows
    return _map_seeds(one, cfg.seeds if seeds is None else seeds, workers)


def run_dynamics(cfg: ExperimentConfig, seed: int, agents: str = "defender",
                 init: Optional[LinearClassifier] = None):
    """One training run with its full trace; ``agents`` is ``"defender"`` or a paradigm name."""
    ctx = prepare(cfg, seed)
    if agents == "defender":
        _, f, trace = fit_defender(ctx, cfg, cfg["defender"])
        return f, trace
    f, trace = train_strategic(ctx.train, ctx.cm, population(cfg, agents),
                               cfg.training_config(seed), cfg.candidate_config(seed), init=init)
    return f, trace


def recovery_design(cfg: ExperimentConfig, seed: int):
    """Simulated pairs for the parameter-recovery check; returns (pairs, f, cm, truth, candidates)."""
    rc = cfg["recovery"]
    truth = ProspectParams(K=rc["K"], cost_in_loss=rc["cost_in_loss"],
                           choice_temperature=rc["choice_temperature"]).with_phi(*rc["phi"])
    d = int(rc["d"])
    f = LinearClassifier(np.eye(d)[0], 0.0)
    cm = CostModel.identity(d, rc["lam"])
    cands = CandidateConfig(rc["n_dirs"], rc["n_mags"], None, 0)
    rng = np.random.default_rng(10_000 + seed)
    X = rng.standard_normal((rc["n_pairs"], d))
    # origins sit near a few chosen logits so several reference levels are populated
    X[:, 0] = rng.choice(np.asarray(rc["levels"], float), rc["n_pairs"]) + rng.uniform(-0.2, 0.2, rc["n_pairs"])
    pairs = simulate_pairs(X, f, cm, truth, cands, seed)
    return pairs, f, cm, truth, cands


def run_recovery(cfg: ExperimentConfig, seeds=None, workers=None) -> List[dict]:
    def one(seed):
        t0 = time.perf_counter()
        pairs, f, cm, truth, cands = recovery_design(cfg, seed)
        res = fit_parameters(pairs, f, cm, truth, seed, cands)
        ll_neutral = choice_log_likelihood(pairs, f, cm, truth.with_phi(*NEUTRAL_PHI), cands)
        a, b, k, g = res.phi
        return [{"seed": seed, "alpha": a, "beta": b, "kappa": k, "gamma": g,
                 "log_likelihood": res.log_likelihood, "neutral_log_likelihood": ll_neutral,
                 "flags": ";".join(res.flags), "fingerprint": cfg.fingerprint,
                 "seconds": round(time.perf_counter() - t0, 3)}]
    return _map_seeds(one, cfg.seeds if seeds is None else seeds, workers)


def summarize(rows: List[dict], keys=("dataset", "agent_paradigm", "classifier_variant", "param", "value", "stage"),
              metrics=("accuracy", "ode", "ude", "alpha", "beta", "kappa", "gamma")) -> List[dict]:
    """Mean and standard deviation of each metric per group of ``keys``."""
    groups: Dict[tuple, List[dict]] = {}
    for r in rows:
        gk = tuple((k, r[k]) for k in keys if k in r)
        groups.setdefault(gk, []).append(r)
    out = []
    for gk, rs in groups.items():
        s = dict(gk)
        s["n_seeds"] = len(rs)
        for m in metrics:
            if m in rs[0]:
                v = np.array([r[m] for r in rs], dtype=float)
                s[f"{m}_mean"] = float(v.mean())
                s[f"{m}_std"] = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        out.append(s)
    return out
