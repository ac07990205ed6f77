"""Command-line interface.

Subcommands:
    gen     generate a synthetic ID store and write it to disk
    synth   synthesize one outlier batch and export it
    run     full experiment loop with artifacts
    sweep   ablation sweep over one config axis
    score   detection metrics from score files

Every flag mirrors a BenchConfig field; ``--config FILE`` supplies a JSON
document with any subset of fields, and explicit flags override the file.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    SWEEP_AXES,
    BenchConfig,
    ablation_sweep,
    generate_synthetic_id,
    run_experiment,
)
from .errors import ConfigError, DataError, NumericalError
from .metrics import score_report
from .store import IdStore
from .synthesis import synthesize_batch, write_batch_csv, write_batch_json, write_trace_jsonl

_CONFIG_FLAGS = {
    # flag dest -> (section, field)
    "dim": (None, "dim"),
    "classes": (None, "num_classes"),
    "points_per_class": (None, "points_per_class"),
    "cluster_kappa": (None, "cluster_kappa"),
    "seed": (None, "seed"),
    "k": (None, "knn_k"),
    "k_detect": (None, "k_detect"),
    "delta": (None, "delta"),
    "kappa": (None, "kappa"),
    "loss_kappa": (None, "loss_kappa"),
    "lambda_d": (None, "lambda_d"),
    "n_adj": (None, "n_adj"),
    "ema_factor": (None, "ema_factor"),
    "grad_mode": (None, "grad_mode"),
    "iterations": (None, "iterations"),
    "insert_per_class": (None, "insert_per_class"),
    "id_test_per_class": (None, "id_test_per_class"),
    "out_dir": (None, "out_dir"),
    "leapfrog_steps": ("hmc", "leapfrog_steps"),
    "step_size": ("hmc", "step_size"),
    "rounds": ("hmc", "rounds"),
    "variant": ("hmc", "variant"),
    "sampler_seed": ("hmc", "rng_seed"),
    "history_window": ("hmc", "history_window"),
    "ood_uniform": ("ood", "n_uniform"),
    "ood_midpoint": ("ood", "n_midpoint"),
    "ood_midpoint_kappa": ("ood", "midpoint_kappa"),
}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file with BenchConfig fields")
    g = parser.add_argument_group("config overrides")
    g.add_argument("--dim", type=int)
    g.add_argument("--classes", type=int)
    g.add_argument("--points-per-class", type=int)
    g.add_argument("--cluster-kappa", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--k", type=int, help="k for the synthesis OOD-ness distance")
    g.add_argument("--k-detect", type=int, help="k for the inference-time detector")
    g.add_argument("--delta", type=float, help="hard margin")
    g.add_argument("--kappa", type=float, help="vMF KDE bandwidth")
    g.add_argument("--loss-kappa", type=float)
    g.add_argument("--lambda-d", type=float)
    g.add_argument("--n-adj", type=int)
    g.add_argument("--ema-factor", type=float)
    g.add_argument("--grad-mode", choices=["analytic", "scaled"])
    g.add_argument("--iterations", type=int)
    g.add_argument("--insert-per-class", type=int)
    g.add_argument("--id-test-per-class", type=int)
    g.add_argument("--out-dir")
    g.add_argument("--leapfrog-steps", "-L", type=int, dest="leapfrog_steps")
    g.add_argument("--step-size", type=float)
    g.add_argument("--rounds", "-R", type=int)
    g.add_argument("--variant", choices=["random_walk", "hmc", "mala", "mmala", "rmhmc"])
    g.add_argument("--sampler-seed", type=int)
    g.add_argument("--history-window", type=int)
    g.add_argument("--ood-uniform", type=int)
    g.add_argument("--ood-midpoint", type=int)
    g.add_argument("--ood-midpoint-kappa", type=float)


def build_config(args: argparse.Namespace) -> BenchConfig:
    if args.config is not None:
        cfg = BenchConfig.load_json(args.config)
    else:
        cfg = BenchConfig()
    top: dict = {}
    hmc: dict = {}
    ood: dict = {}
    for dest, (section, field) in _CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        {None: top, "hmc": hmc, "ood": ood}[section][field] = value
    if hmc:
        top["hmc"] = dataclasses.replace(cfg.hmc, **hmc)
    if ood:
        top["ood"] = dataclasses.replace(cfg.ood, **ood)
    return dataclasses.replace(cfg, **top) if top else cfg


def _synth_once(cfg: BenchConfig, store: IdStore):
    snapshot = store.snapshot()
    return synthesize_batch(
        snapshot,
        cfg.hmc,
        k=cfg.effective_k(snapshot),
        delta=cfg.delta,
        kappa=cfg.kappa,
        n_adj=cfg.effective_n_adj(),
        grad_mode=cfg.grad_mode,
    )


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    store = generate_synthetic_id(cfg)
    store.save(args.out)
    print(f"wrote store with {cfg.num_classes} classes x {cfg.points_per_class} points to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    store = IdStore.load(args.store) if args.store else generate_synthetic_id(cfg)
    batch = _synth_once(cfg, store)
    out = Path(args.out)
    if out.suffix == ".csv":
        write_batch_csv(batch, out)
    else:
        write_batch_json(batch, out)
    if args.trace:
        write_trace_jsonl(batch, args.trace)
    print(f"synthesized {len(batch)} outliers over {len(batch.chains)} chains -> {out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    if cfg.out_dir is None:
        cfg = dataclasses.replace(cfg, out_dir="runs/latest")
    art = run_experiment(cfg, trace=args.trace)
    last = art.iterations[-1]
    print(
        f"run complete: {cfg.iterations} iterations, final fpr95={last.report.fpr95:.4f} "
        f"auroc={last.report.auroc:.4f} aupr={last.report.aupr:.4f} -> {art.out_dir}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    values = [v for v in args.values.split(",") if v]
    out_dir = args.sweep_dir or (Path(cfg.out_dir) if cfg.out_dir else Path("runs/sweep"))
    rows = ablation_sweep(cfg, args.axis, values, out_dir=out_dir)
    for r in rows:
        print(
            f"{r.axis}={r.value}: fpr95={r.fpr95:.4f} auroc={r.auroc:.4f} "
            f"aupr={r.aupr:.4f} synth={r.synth_time_ms:.1f}ms"
        )
    print(f"sweep table -> {Path(out_dir) / 'sweep.csv'}")
    return 0


def _read_scores(path: Path, key: str) -> np.ndarray:
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if isinstance(doc, dict):
            doc = doc[key]
        return np.asarray(doc, dtype=float)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    values = []
    for row in rows:
        if not row:
            continue
        try:
            values.append(float(row[0]))
        except ValueError:
            continue  # header line
    return np.asarray(values)


def cmd_score(args: argparse.Namespace) -> int:
    id_scores = _read_scores(Path(args.id_scores), "id_scores")
    ood_scores = _read_scores(Path(args.ood_scores), "ood_scores")
    report = score_report(id_scores, ood_scores)
    if args.out:
        report.save_json(args.out, include_scores=False)
    if args.csv:
        report.save_csv(args.csv)
    print(
        f"fpr95={report.fpr95:.4f} auroc={report.auroc:.4f} "
        f"aupr={report.aupr:.4f} threshold={report.threshold:.4f}"
    )
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodsynth",
        description="Hyperspherical virtual-outlier synthesis and OOD evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic ID store")
    _add_config_flags(p_gen)
    p_gen.add_argument("--out", required=True, help="store file (.json or binary)")
    p_gen.set_defaults(func=cmd_gen)

    p_synth = sub.add_parser("synth", help="synthesize one outlier batch")
    _add_config_flags(p_synth)
    p_synth.add_argument("--store", help="existing store file; default: generate from config")
    p_synth.add_argument("--out", required=True, help="batch file (.json or .csv)")
    p_synth.add_argument("--trace", help="write per-transition JSON lines here")
    p_synth.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="run the full experiment loop")
    _add_config_flags(p_run)
    p_run.add_argument("--trace", action="store_true", help="emit trace.jsonl for the last batch")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="ablation sweep over one axis")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=list(SWEEP_AXES))
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--sweep-dir", help="directory for per-value runs and sweep.csv")
    p_sweep.set_defaults(func=cmd_sweep)

    p_score = sub.add_parser("score", help="compute metrics from score files")
    p_score.add_argument("--id-scores", required=True)
    p_score.add_argument("--ood-scores", required=True)
    p_score.add_argument("--out", help="write report JSON here")
    p_score.add_argument("--csv", help="write metric,value CSV here")
    p_score.set_defaults(func=cmd_score)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
