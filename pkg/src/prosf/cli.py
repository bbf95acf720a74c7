"""Command-line entry point: ``prosf <command> [--config PATH] [--out DIR] [--seeds LIST] [--force]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .data import NormalizationRecord, SyntheticSpec, generate_synthetic, save_dataset_csv
from .experiments import (WORKERS_ENV, ExperimentConfig, fit_defender, load_config, prepare,
                          run_ablation, run_dynamics, run_grid, run_mixed, run_recovery, run_sweep,
                          summarize)
from .inference import fit_parameters, read_pairs_csv
from .metrics import CSV_FIELDS
from .model_core import LinearClassifier

COMMANDS = ("generate", "train", "evaluate", "ablate", "sweep", "dynamics", "infer")


class CliError(Exception):
    pass


def parse_seeds(text: str) -> List[int]:
    """``"0,3,5-7"`` -> ``[0, 3, 5, 6, 7]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"bad seed range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no seeds given")
    return out


class Outputs:
    """Collects target paths and refuses to clobber existing files unless forced."""

    def __init__(self, out_dir: Path, force: bool):
        self.dir = out_dir
        self.force = force

    def path(self, name: str) -> Path:
        p = self.dir / name
        if p.exists() and not self.force:
            raise CliError(f"{p} exists; pass --force to overwrite")
        return p

    def claim(self, names: Sequence[str]) -> List[Path]:
        paths = [self.path(n) for n in names]
        self.dir.mkdir(parents=True, exist_ok=True)
        return paths


def write_rows(path: Path, rows: List[dict], leading: Sequence[str] = ()) -> None:
    cols = list(leading)
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow(r)


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest(cfg: ExperimentConfig, command: str, seeds, files, started: float) -> dict:
    return {"command": command, "version": __version__, "fingerprint": cfg.fingerprint,
            "seeds": list(seeds), "config": cfg.raw, "files": [Path(f).name for f in files],
            "seconds": round(time.perf_counter() - started, 3)}


def model_record(f: LinearClassifier, label: str, seed: int, cfg: ExperimentConfig,
                 norm: Optional[NormalizationRecord]) -> dict:
    return {"weights": [float(v) for v in f.weights], "bias": f.bias,
            "decision_threshold": f.decision_threshold, "variant": label, "seed": seed,
            "fingerprint": cfg.fingerprint,
            "normalization": None if norm is None else norm.to_dict()}


def load_model(path) -> LinearClassifier:
    with open(path, encoding="utf-8") as fh:
        rec = json.load(fh)
    try:
        return LinearClassifier(rec["weights"], rec["bias"], rec.get("decision_threshold", 0.5))
    except KeyError as exc:
        raise CliError(f"{path}: model file lacks {exc}") from None


def cmd_generate(cfg, args, outs: Outputs, seeds) -> List[Path]:
    if cfg["dataset"]["csv"] is not None:
        raise CliError("generate needs a synthetic dataset config")
    names = [f"data_seed{s}.csv" for s in seeds]
    paths = outs.claim(names + ["manifest.json"])
    for s, p in zip(seeds, paths):
        save_dataset_csv(generate_synthetic(SyntheticSpec(seed=s, **cfg["dataset"]["synthetic"])), p)
    return paths


def cmd_train(cfg, args, outs: Outputs, seeds) -> List[Path]:
    names = []
    for s in seeds:
        names += [f"model_seed{s}.json", f"trace_seed{s}.csv"]
    paths = outs.claim(names + ["manifest.json"])
    for i, s in enumerate(seeds):
        ctx = prepare(cfg, s)
        label, f, trace = fit_defender(ctx, cfg, cfg["defender"])
        write_json(paths[2 * i], model_record(f, label, s, cfg, ctx.normalization))
        trace.to_csv(paths[2 * i + 1])
    return paths


def cmd_evaluate(cfg, args, outs: Outputs, seeds) -> List[Path]:
    paths = outs.claim(["results.csv", "summary.json", "manifest.json"])
    if args.model:
        from .experiments import _deploy, _row, population
        f = load_model(args.model)
        rows = []
        for s in seeds:
            ctx = prepare(cfg, s)
            for p in ("rational", "non-rational", "mixed"):
                t0 = time.perf_counter()
                rows.append(_row(cfg, ctx, _deploy(ctx, cfg, f, population(cfg, p)), p, "model", t0))
    else:
        rows = run_grid(cfg, seeds)
        if args.mixed_sweep:
            rows += run_mixed(cfg, seeds)
    write_rows(paths[0], rows, CSV_FIELDS)
    write_json(paths[1], summarize(rows))
    return paths


def cmd_ablate(cfg, args, outs: Outputs, seeds) -> List[Path]:
    paths = outs.claim(["ablation.csv", "summary.json", "manifest.json"])
    rows = run_ablation(cfg, seeds)
    write_rows(paths[0], rows, CSV_FIELDS)
    write_json(paths[1], summarize(rows))
    return paths


def cmd_sweep(cfg, args, outs: Outputs, seeds) -> List[Path]:
    param = args.param or cfg["sweep"]["param"]
    values = json.loads(args.values) if args.values else cfg["sweep"]["values"]
    if not isinstance(values, list):
        raise CliError("--values must be a JSON list")
    paths = outs.claim(["sweep.csv", "summary.json", "manifest.json"])
    rows = run_sweep(cfg, param, values, seeds)
    write_rows(paths[0], rows, CSV_FIELDS if param != "stages" else ())
    write_json(paths[1], summarize(rows))
    return paths


def cmd_dynamics(cfg, args, outs: Outputs, seeds) -> List[Path]:
    paths = outs.claim([f"dynamics_seed{s}.csv" for s in seeds] + ["dynamics_summary.json", "manifest.json"])
    summary = []
    for s, p in zip(seeds, paths):
        _, trace = run_dynamics(cfg, s, args.agents)
        trace.to_csv(p)
        summary.append({"seed": s, "converged": trace.converged,
                        "iterations_used": trace.iterations_used,
                        "returned_iteration": trace.returned_iteration,
                        "tail_contraction": trace.tail_contraction()})
    write_json(paths[-2], summary)
    return paths


def cmd_infer(cfg, args, outs: Outputs, seeds) -> List[Path]:
    if args.pairs:
        if not args.model:
            raise CliError("infer --pairs also needs --model (the classifier the agents faced)")
        paths = outs.claim(["fit_report.txt", "fit.json", "manifest.json"])
        pairs = read_pairs_csv(args.pairs)
        f = load_model(args.model)
        cm = cfg.cost_model(f.dimension)
        seed = seeds[0]
        res = fit_parameters(pairs, f, cm, cfg.prospect_params(), seed, cfg.candidate_config(0))
        paths[0].write_text(res.report(), encoding="utf-8")
        rec = res.to_record()
        rec["fingerprint"] = cfg.fingerprint
        write_json(paths[1], rec)
        return paths
    paths = outs.claim(["recovery.csv", "summary.json", "manifest.json"])
    rows = run_recovery(cfg, seeds)
    write_rows(paths[0], rows)
    write_json(paths[1], summarize(rows, keys=("fingerprint",)))
    return paths


HANDLERS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate,
            "ablate": cmd_ablate, "sweep": cmd_sweep, "dynamics": cmd_dynamics, "infer": cmd_infer}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prosf", description="Strategic classification with "
                                "prospect-theoretic agents: experiments and parameter inference.",
                                epilog=f"Set {WORKERS_ENV}=N to run seeds on N worker threads.")
    p.add_argument("--version", action="version", version=f"prosf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "write synthetic datasets",
        "train": "train the configured defender and write model + dynamics trace",
        "evaluate": "defenders x agent paradigms grid (or one saved model)",
        "ablate": "mechanism ablation on mixed agents",
        "sweep": "vary one behavioral parameter (or 'stages' for cumulative biases)",
        "dynamics": "training traces with contraction diagnostics",
        "infer": "fit behavioral parameters from manipulation pairs (or run the recovery check)",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", type=Path, help="JSON config file (defaults apply to missing keys)")
        s.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        s.add_argument("--seeds", type=parse_seeds, help="e.g. 0-9 or 0,2,4 (overrides config)")
        s.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if name == "evaluate":
            s.add_argument("--model", type=Path, help="evaluate this saved model instead of training")
            s.add_argument("--mixed-sweep", action="store_true",
                           help="also evaluate both defenders at every pi in mixed_pis")
        if name == "sweep":
            s.add_argument("--param", help="parameter to sweep (overrides config)")
            s.add_argument("--values", help="JSON list of values (overrides config)")
        if name == "dynamics":
            s.add_argument("--agents", default="defender",
                           choices=("defender", "rational", "non-rational", "mixed"),
                           help="population to train against")
        if name == "infer":
            s.add_argument("--pairs", type=Path, help="two-block CSV of before/after features")
            s.add_argument("--model", type=Path, help="model JSON the agents responded to")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_config(args.config)
        seeds = args.seeds if args.seeds is not None else cfg.seeds
        outs = Outputs(args.out, args.force)
        paths = HANDLERS[args.command](cfg, args, outs, seeds)
        write_json(paths[-1], manifest(cfg, args.command, seeds, paths[:-1], started))
    except (CliError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"prosf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
