"""Cross-validation harness and the class-imbalance sweep.

cross_validate trains one model per fold rotation (train on k-1 folds,
select the best epoch on the held-out fold, score that checkpoint on the
fixed test partition) and assembles per-rotation plus aggregate numbers.
imbalance_sweep re-augments the training side to a grid of minority
ratios and charts test performance across folds x seeds.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .metrics import auroc, confusion, metrics
from .models import FusionClassifier, HyperParams
from .pipeline import (
    augment_with_plan,
    guard_feature_spec,
    guard_fit_records,
    guard_vocabulary,
    partition_indices,
    record_labels,
)
from .records import DailyRecord
from .split import SplitPlan, split

METRIC_KEYS = ("ACC", "PRE", "REC", "F1", "AUROC")


def score_model(clf: FusionClassifier, records: list[DailyRecord], y) -> dict[str, float]:
    """Threshold-0.5 confusion metrics plus AUROC, as fractions in [0, 1]."""
    y = np.asarray(y).astype(int)
    p = clf.predict_proba(records)[:, 1]
    m = metrics(confusion(p, y))
    return {
        "ACC": m.acc,
        "PRE": m.pre,
        "REC": m.rec,
        "F1": m.f1,
        "AUROC": auroc(p, y),
    }


@dataclass
class RotationResult:
    val_fold: int
    train_folds: tuple[int, ...]
    val: dict[str, float]
    test: dict[str, float]
    best_epoch: int
    n_epochs: int

    @property
    def label(self) -> str:
        folds = ", ".join(str(f) for f in self.train_folds)
        return f"Train (Fold{folds}), Val (Fold{self.val_fold})"

    def to_dict(self) -> dict:
        return {
            "val_fold": self.val_fold,
            "train_folds": list(self.train_folds),
            "val": dict(self.val),
            "test": dict(self.test),
            "best_epoch": self.best_epoch,
            "n_epochs": self.n_epochs,
        }


def _aggregate(values: list[dict[str, float]]) -> dict[str, dict[str, float]]:
    out = {}
    for key in METRIC_KEYS:
        col = np.array([v[key] for v in values], dtype=np.float64)
        out[key] = {"mean": float(col.mean()), "std": float(col.std())}
    return out


@dataclass
class EvalReport:
    architecture: str
    k: int
    seed: int
    rotations: list[RotationResult] = field(default_factory=list)

    def aggregate(self, split: str = "val") -> dict[str, dict[str, float]]:
        """Mean and population std of each metric across rotations."""
        if split not in ("val", "test"):
            raise DataError(f"aggregate: unknown split {split!r}")
        return _aggregate([getattr(r, split) for r in self.rotations])

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "k": self.k,
            "seed": self.seed,
            "rotations": [r.to_dict() for r in self.rotations],
            "aggregate": {s: self.aggregate(s) for s in ("val", "test")},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def validate(self) -> None:
        """Stored aggregates must be recomputable from the rotation rows."""
        d = self.to_dict()
        for split in ("val", "test"):
            recomputed = self.aggregate(split)
            for key in METRIC_KEYS:
                for stat in ("mean", "std"):
                    if d["aggregate"][split][key][stat] != recomputed[key][stat]:
                        raise DataError(f"aggregate mismatch for {split}/{key}/{stat}")

    def to_csv_text(self, split: str = "val") -> str:
        """Rotation rows plus an Average (Std) row, percent-scaled."""
        lines = ["Model,Datasets,ACC(%),PRE(%),REC(%),F1(%),AUROC(%)"]
        for i, rot in enumerate(self.rotations):
            cells = [self.architecture if i == 0 else "", f'"{rot.label}"']
            vals = getattr(rot, split)
            cells += [f"{100.0 * vals[key]:.1f}" for key in METRIC_KEYS]
            lines.append(",".join(cells))
        agg = self.aggregate(split)
        cells = ["", "Average (Std)"]
        cells += [
            f"{100.0 * agg[key]['mean']:.1f} ({100.0 * agg[key]['std']:.2f})"
            for key in METRIC_KEYS
        ]
        lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _check_fold_classes(plan: SplitPlan, y: np.ndarray) -> None:
    for f in range(1, plan.k + 1):
        fold_y = y[plan.fold_record_ids[f]]
        if fold_y.size == 0 or len(set(fold_y.tolist())) < 2:
            raise DataError(f"cross_validate: fold{f} does not contain both classes")
    test_y = y[plan.test_record_ids]
    if test_y.size == 0 or len(set(test_y.tolist())) < 2:
        raise DataError("cross_validate: test partition does not contain both classes")


def _clf_for(architecture: str, hp: HyperParams | None, clf_params: dict | None) -> FusionClassifier:
    kwargs = dict(hp.to_dict()) if hp is not None else {}
    kwargs.update(clf_params or {})
    return FusionClassifier(architecture=architecture, **kwargs)


def cross_validate(
    architecture: str,
    hp: HyperParams | None,
    records: list[DailyRecord],
    labels_by_subject: dict[str, bool],
    plan: SplitPlan,
    clf_params: dict | None = None,
    jobs: int = 1,
) -> EvalReport:
    if plan.k < 2:
        raise DataError(f"cross_validate: need k >= 2 folds, got {plan.k}")
    y = record_labels(records, labels_by_subject)
    _check_fold_classes(plan, y)

    def run(val_fold: int) -> RotationResult:
        train_idx, val_idx, test_idx = partition_indices(records, plan, val_fold)
        guard_fit_records(train_idx, plan, records, val_fold=val_fold)
        train = [records[i] for i in train_idx]
        val = [records[i] for i in val_idx]
        test = [records[i] for i in test_idx]
        clf = _clf_for(architecture, hp, clf_params)
        clf.fit(train, y[train_idx], val, y[val_idx])
        guard_vocabulary(clf.vocab_, train)
        guard_feature_spec(clf.features_.spec_, train)
        return RotationResult(
            val_fold=val_fold,
            train_folds=tuple(f for f in range(1, plan.k + 1) if f != val_fold),
            val=score_model(clf, val, y[val_idx]),
            test=score_model(clf, test, y[test_idx]),
            best_epoch=clf.history_.best_epoch,
            n_epochs=len(clf.history_.epochs),
        )

    folds = list(range(1, plan.k + 1))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rotations = list(pool.map(run, folds))
    else:
        rotations = [run(v) for v in folds]
    return EvalReport(architecture=architecture, k=plan.k, seed=plan.seed, rotations=rotations)


@dataclass
class SweepCell:
    ratio: float
    seed: int
    val_fold: int
    test: dict[str, float]


@dataclass
class SweepTable:
    architecture: str
    ratios: tuple[float, ...]
    seeds: tuple[int, ...]
    k: int
    cells: list[SweepCell] = field(default_factory=list)

    def _runs(self, ratio: float) -> list[SweepCell]:
        return [c for c in self.cells if c.ratio == ratio]

    def summary(self) -> list[dict]:
        """One row per (ratio, metric): mean with a 95% normal CI."""
        rows = []
        for ratio in self.ratios:
            runs = self._runs(ratio)
            for key in METRIC_KEYS:
                vals = np.array([c.test[key] for c in runs], dtype=np.float64)
                mean = float(vals.mean())
                # normal-approximation CI with the sample std
                sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
                half = 1.959963984540054 * sd / np.sqrt(vals.size)
                rows.append(
                    {
                        "ratio": ratio,
                        "metric": key,
                        "mean": mean,
                        "ci_low": float(mean - half),
                        "ci_high": float(mean + half),
                        "n_runs": int(vals.size),
                    }
                )
        return rows

    def mean(self, ratio: float, key: str = "AUROC") -> float:
        vals = [c.test[key] for c in self._runs(ratio)]
        if not vals:
            raise DataError(f"sweep: no runs recorded for ratio {ratio}")
        return float(np.mean(vals))

    def to_csv_text(self) -> str:
        lines = ["ratio,metric,mean,ci_low,ci_high,n_runs"]
        for row in self.summary():
            lines.append(
                f"{row['ratio']!r},{row['metric']},{row['mean']!r},"
                f"{row['ci_low']!r},{row['ci_high']!r},{row['n_runs']}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "ratios": list(self.ratios),
            "seeds": list(self.seeds),
            "k": self.k,
            "cells": [
                {
                    "ratio": c.ratio,
                    "seed": c.seed,
                    "val_fold": c.val_fold,
                    "test": dict(c.test),
                }
                for c in self.cells
            ],
            "summary": self.summary(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def imbalance_sweep(
    architecture: str,
    hp: HyperParams | None,
    cleaned_records: list[DailyRecord],
    labels_by_subject: dict[str, bool],
    ratios=(0.30, 0.35, 0.40, 0.45, 0.50),
    seeds=(0, 1, 2),
    k: int = 3,
    test_fraction: float = 0.25,
    augmenters=None,
    clf_params: dict | None = None,
    jobs: int = 1,
) -> SweepTable:
    """Retrain from scratch at each minority ratio and log test metrics.

    cleaned_records must be augmentation-free: each cell grows its own
    copies so the ratios stay comparable.
    """
    ratios = tuple(float(r) for r in ratios)
    if not ratios:
        raise DataError("imbalance_sweep: empty ratio grid")
    for r in ratios:
        if not 0.0 < r <= 0.5:
            raise DataError(f"imbalance_sweep: ratio {r} outside (0, 0.5]")
    table = SweepTable(architecture=architecture, ratios=ratios, seeds=tuple(seeds), k=k)
    for seed in table.seeds:
        base_plan = split(
            cleaned_records, labels_by_subject, test_fraction=test_fraction, k=k, seed=seed
        )
        for ratio in ratios:
            full, plan = augment_with_plan(
                cleaned_records, base_plan, labels_by_subject, ratio, augmenters
            )
            report = cross_validate(
                architecture,
                hp,
                full,
                labels_by_subject,
                plan,
                clf_params=clf_params,
                jobs=jobs,
            )
            for rot in report.rotations:
                table.cells.append(
                    SweepCell(ratio=ratio, seed=seed, val_fold=rot.val_fold, test=dict(rot.test))
                )
    return table
