"""Cross-validated runs and hyperparameter sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import split_kfold
from .losses import SslConfig
from .trainer import train
from .util import spawn_seed


@dataclass
class FoldOutcome:
    fold: int
    repeat: int
    seed: int
    best_epoch: int
    precision: float
    recall: float
    ndcg: float


@dataclass
class CrossValidationReport:
    folds: int
    repeats: int
    k: int
    scenario: str
    outcomes: list = field(default_factory=list)

    def _vals(self, metric):
        return np.array([getattr(o, metric) for o in self.outcomes])

    def aggregate(self):
        out = {}
        for metric in ("precision", "recall", "ndcg"):
            vals = self._vals(metric)
            out[metric] = {
                "mean": float(vals.mean()),
                "std": float(vals.std(ddof=0)),
                "best": float(vals.max()),
            }
        out["n_runs"] = len(self.outcomes)
        return out

    def as_dict(self):
        return {
            "folds": self.folds,
            "repeats": self.repeats,
            "k": self.k,
            "scenario": self.scenario,
            "aggregate": self.aggregate(),
            "runs": [vars(o) for o in self.outcomes],
        }


def cross_validate(dataset, cfg, ssl_cfg=None, folds=5, repeats=1, progress=None):
    """Train on each fold (times ``repeats`` fresh seeds) and aggregate.

    Reports both the mean/std over runs and the best single run of each
    metric; per-run detail is retained.
    """
    ssl_cfg = ssl_cfg or SslConfig()
    report = CrossValidationReport(folds=folds, repeats=repeats,
                                   k=cfg.eval_k, scenario=cfg.eval_scenario)
    for repeat in range(repeats):
        fold_seed = spawn_seed(cfg.seed, repeat)
        datasets = split_kfold(dataset, folds, seed=fold_seed)
        for fold, fold_ds in enumerate(datasets):
            run_seed = spawn_seed(cfg.seed, repeat * folds + fold + 1)
            run_cfg = replace(cfg, seed=run_seed)
            result = train(fold_ds, run_cfg, ssl_cfg)
            metrics = result.metrics_reports[result.best_epoch - 1]
            outcome = FoldOutcome(fold=fold, repeat=repeat, seed=run_seed,
                                  best_epoch=result.best_epoch,
                                  precision=metrics.precision,
                                  recall=metrics.recall, ndcg=metrics.ndcg)
            report.outcomes.append(outcome)
            if progress:
                progress(outcome)
    return report


def sweep_grid(sweeps):
    """Expand {param: [values]} into the list of grid points (dicts)."""
    names = [k for k, v in sweeps.items() if v]
    points = [{}]
    for name in names:
        points = [dict(p, **{name: v}) for p in points for v in sweeps[name]]
    return points


def run_sweep(dataset, cfg, ssl_cfg, sweeps, folds=0, progress=None):
    """Train every grid point with a fresh derived seed; failures are
    recorded and the sweep continues.

    Sweepable params: beta1, beta2, tau (SSL config) and depth (model).
    When ``folds`` > 0 each point cross-validates instead of single-run.
    """
    rows = []
    for idx, point in enumerate(sweep_grid(sweeps)):
        point_seed = spawn_seed(cfg.seed, 5000 + idx)
        run_cfg = replace(cfg, seed=point_seed,
                          depth=int(point.get("depth", cfg.depth)))
        run_ssl = replace(ssl_cfg,
                          beta1=float(point.get("beta1", ssl_cfg.beta1)),
                          beta2=float(point.get("beta2", ssl_cfg.beta2)),
                          tau=float(point.get("tau", ssl_cfg.tau)))
        row = {"point": idx, "seed": point_seed, **point}
        try:
            if folds:
                cv = cross_validate(dataset, run_cfg, run_ssl, folds=folds)
                agg = cv.aggregate()
                row.update({
                    "precision": agg["precision"]["mean"],
                    "recall": agg["recall"]["mean"],
                    "ndcg": agg["ndcg"]["mean"],
                    "status": "ok",
                })
            else:
                result = train(dataset, run_cfg, run_ssl)
                metrics = result.metrics_reports[result.best_epoch - 1]
                row.update({
                    "precision": metrics.precision,
                    "recall": metrics.recall,
                    "ndcg": metrics.ndcg,
                    "best_epoch": result.best_epoch,
                    "status": "ok",
                })
        except Exception as exc:  # keep sweeping, record the failure
            row.update({"status": "failed", "error": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
        if progress:
            progress(row)
    return rows


def sweep_rows_to_csv(rows, path):
    import csv

    keys = ["point", "seed", "beta1", "beta2", "tau", "depth",
            "precision", "recall", "ndcg", "best_epoch", "status", "error"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path
