"""Command-line entry points: train, eval, motifs, sweep.

Every run writes a manifest (config hash, seed, library versions) next to
its artifacts so it can be rerun exactly. Config comes from a key=value
file; command-line flags win over file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("MOTIFREC_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


_apply_thread_cap()  # must run before numpy is pulled in below

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from . import io as mio  # noqa: E402
from .config import RunConfig, load_config, save_config  # noqa: E402
from .data import load_dataset, split_kfold, summarize  # noqa: E402
from .evaluate import evaluate  # noqa: E402
from .experiment import cross_validate, run_sweep, sweep_rows_to_csv  # noqa: E402
from .fusion import export_attention  # noqa: E402
from .motifs import degree_stats, motifs_from_dataset  # noqa: E402
from .trainer import (CmhcModel, load_checkpoint, save_checkpoint,  # noqa: E402
                      train)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="motifrec",
        description="Motif-channel social recommender: training, evaluation, "
                    "motif inspection and hyperparameter sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--ratings", help="rating file (user item [rating])")
        p.add_argument("--trust", help="trust file (src dst [weight])")
        p.add_argument("--output-dir", help="artifact directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--deterministic", action="store_true", default=None,
                       help="single-threaded, bitwise-reproducible runs")

    p_train = sub.add_parser("train", help="train a model and write artifacts")
    add_common(p_train)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--dim", type=int)
    p_train.add_argument("--depth", type=int)
    p_train.add_argument("--learning-rate", type=float)
    p_train.add_argument("--beta1", type=float)
    p_train.add_argument("--beta2", type=float)
    p_train.add_argument("--tau", type=float)
    p_train.add_argument("--ablate", action="append", default=None,
                         help="ablation flag, repeatable")
    p_train.add_argument("--direct-contrast", choices=["off", "triplet", "infonce"])
    p_train.add_argument("--scenario", choices=["general", "cold_start"])
    p_train.add_argument("--dump-attention", metavar="PATH")
    p_train.add_argument("--cross-validate", action="store_true",
                         help="aggregate over all folds instead of fold 0")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    add_common(p_eval)
    p_eval.add_argument("checkpoint", help="checkpoint directory")
    p_eval.add_argument("--scenario", choices=["general", "cold_start"])
    p_eval.add_argument("--k", type=int)
    p_eval.add_argument("--fold-seed", type=int, default=None,
                        help="rebuild the evaluation fold with this seed")

    p_motifs = sub.add_parser("motifs", help="dump channel adjacencies and stats")
    add_common(p_motifs)

    p_sweep = sub.add_parser("sweep", help="train a hyperparameter grid")
    add_common(p_sweep)
    p_sweep.add_argument("--folds", type=int)

    return parser


_FLAG_TO_FIELD = {
    "ratings": "ratings", "trust": "trust", "output_dir": "output_dir",
    "seed": "seed", "epochs": "epochs", "batch_size": "batch_size",
    "dim": "dim", "depth": "depth", "learning_rate": "learning_rate",
    "beta1": "beta1", "beta2": "beta2", "tau": "tau",
    "direct_contrast": "direct_contrast", "scenario": "scenario",
    "dump_attention": "dump_attention", "k": "k", "folds": "folds",
    "deterministic": "deterministic",
}


def resolve_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {}
    for flag, name in _FLAG_TO_FIELD.items():
        val = getattr(args, flag, None)
        if val is not None:
            updates[name] = val
    if getattr(args, "ablate", None):
        updates["ablate"] = tuple(args.ablate)
    return dataclasses.replace(cfg, **updates)


def _require_files(cfg):
    missing = [p for p in (cfg.ratings, cfg.trust) if p and not os.path.exists(p)]
    if not cfg.ratings:
        print("error: no ratings file configured", file=sys.stderr)
        raise SystemExit(2)
    if missing:
        for p in missing:
            print(f"error: missing input file {p}", file=sys.stderr)
        raise SystemExit(2)


def _write_manifest(cfg, outdir, extra=None):
    import scipy

    manifest = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": {
            "motifrec": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    if extra:
        manifest.update(extra)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    save_config(cfg, os.path.join(outdir, "config.txt"))
    return path


def _prepare(cfg):
    if cfg.deterministic:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = "1"
    dataset = load_dataset(cfg.ratings, cfg.trust or None)
    return dataset


def cmd_train(args):
    cfg = resolve_config(args)
    _require_files(cfg)
    dataset = _prepare(cfg)
    outdir = cfg.output_dir
    _write_manifest(cfg, outdir, {"command": "train"})
    with open(os.path.join(outdir, "dataset.json"), "w", encoding="utf-8") as fh:
        json.dump(summarize(dataset), fh, indent=2, sort_keys=True)

    train_cfg = cfg.train_config()
    ssl_cfg = cfg.ssl_config()
    log_path = os.path.join(outdir, "training_log.jsonl")
    if os.path.exists(log_path):
        os.remove(log_path)

    if args.cross_validate:
        report = cross_validate(dataset, train_cfg, ssl_cfg,
                                folds=cfg.folds, repeats=cfg.repeats,
                                progress=lambda o: print(
                                    f"fold {o.fold} repeat {o.repeat}: "
                                    f"R@{cfg.k}={o.recall:.4f}"))
        with open(os.path.join(outdir, "cross_validation.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        print(json.dumps(report.aggregate(), indent=2, sort_keys=True))
        return 0

    fold = split_kfold(dataset, cfg.folds, seed=cfg.seed)[0]
    result = train(fold, train_cfg, ssl_cfg, log_path=log_path,
                   progress=lambda e: print(
                       f"epoch {e['epoch']:3d}  L={e['L']:.4f}  "
                       f"R@{cfg.k}={e['recall_at_k']:.4f}"))

    save_checkpoint(os.path.join(outdir, "checkpoint"), result.params,
                    train_cfg, ssl_cfg, fold)
    best_metrics = result.metrics_reports[result.best_epoch - 1]
    report = {"best_epoch": result.best_epoch, **best_metrics.as_dict()}
    with open(os.path.join(outdir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)

    out = result.model.forward()
    attention_path = cfg.dump_attention or os.path.join(outdir, "attention.csv")
    alphas = {c: (a.value if hasattr(a, "value") else a)
              for c, a in out.alpha_cross.items()}
    export_attention(fold, alphas, attention_path)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_eval(args):
    cfg = resolve_config(args)
    _require_files(cfg)
    dataset = _prepare(cfg)
    params, train_cfg, ssl_cfg, manifest = load_checkpoint(args.checkpoint)
    if manifest["n_users"] != dataset.n_users or manifest["n_items"] != dataset.n_items:
        print(f"error: checkpoint is for {manifest['n_users']} users x "
              f"{manifest['n_items']} items, dataset has {dataset.n_users} x "
              f"{dataset.n_items}", file=sys.stderr)
        raise SystemExit(1)
    fold_seed = args.fold_seed if args.fold_seed is not None else train_cfg.seed
    fold = split_kfold(dataset, cfg.folds, seed=fold_seed)[0]
    scenario = cfg.scenario
    model = CmhcModel(fold, train_cfg, ssl_cfg, params)
    out = model.forward()
    metrics = evaluate(out.h.value, out.Q.value, fold, scenario=scenario, k=cfg.k)
    payload = metrics.as_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, f"eval_{scenario}.json"), "w",
              encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return 0


def cmd_motifs(args):
    cfg = resolve_config(args)
    _require_files(cfg)
    dataset = _prepare(cfg)
    outdir = cfg.output_dir
    _write_manifest(cfg, outdir, {"command": "motifs"})
    motifs = motifs_from_dataset(dataset)
    for name in ("s", "j", "p"):
        mio.save_coo_text(os.path.join(outdir, f"A_{name}.coo.txt"),
                          motifs.channel(name))
    stats = degree_stats(motifs)
    with open(os.path.join(outdir, "degree_stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
    print(json.dumps({c: stats[c]["nonzero_rows"] for c in stats}, sort_keys=True))
    return 0


def cmd_sweep(args):
    cfg = resolve_config(args)
    _require_files(cfg)
    sweeps = cfg.sweeps()
    if not any(sweeps.values()):
        print("error: sweep mode needs at least one non-empty sweep list "
              "(sweep_beta1/sweep_beta2/sweep_tau/sweep_depth)", file=sys.stderr)
        raise SystemExit(1)
    dataset = _prepare(cfg)
    outdir = cfg.output_dir
    _write_manifest(cfg, outdir, {"command": "sweep"})
    fold = split_kfold(dataset, cfg.folds, seed=cfg.seed)[0]
    rows = run_sweep(fold, cfg.train_config(), cfg.ssl_config(), sweeps,
                     progress=lambda r: print(
                         f"point {r['point']}: {r.get('status')} "
                         f"ndcg={r.get('ndcg', float('nan')):.4f}"
                         if r.get("status") == "ok" else
                         f"point {r['point']}: {r.get('error')}"))
    path = sweep_rows_to_csv(rows, os.path.join(outdir, "sweep.csv"))
    print(f"wrote {path} ({len(rows)} points)")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "eval": cmd_eval,
                "motifs": cmd_motifs, "sweep": cmd_sweep}
    try:
        return handlers[args.command](args)
    except SystemExit:
        raise
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
