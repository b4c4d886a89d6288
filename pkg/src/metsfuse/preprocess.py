"""Record cleaning, significance-based feature selection, normalization.

clean() applies, in order: drop records with missing text, drop records
with out-of-range physiology, drop subjects that lost more than half
their records, impute remaining missing physiology from the subject's
own mean, drop subjects left with a fully missing field. Every action
is written to an audit log.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from metsfuse.errors import DataError
from metsfuse.records import IMPUTED, PHYSIO_FIELDS, DailyRecord

HR_RANGE = (30.0, 220.0)
SPO2_RANGE = (50.0, 100.0)
STEPS_MAX = 100000.0


def _range_violation(r: DailyRecord) -> str | None:
    for f in ("hr_min", "hr_max"):
        v = getattr(r, f)
        if v is not None and not HR_RANGE[0] <= v <= HR_RANGE[1]:
            return f
    if r.spo2_mean is not None and not SPO2_RANGE[0] <= r.spo2_mean <= SPO2_RANGE[1]:
        return "spo2_mean"
    if r.steps is not None and (r.steps < 0 or r.steps > STEPS_MAX):
        return "steps"
    if r.hr_min is not None and r.hr_max is not None and r.hr_min > r.hr_max:
        return "hr_min"
    return None


def clean(records: list[DailyRecord]) -> tuple[list[DailyRecord], list[dict]]:
    audit: list[dict] = []
    total: dict[str, int] = {}
    dropped: dict[str, int] = {}
    kept: list[DailyRecord] = []

    for r in records:
        total[r.subject_id] = total.get(r.subject_id, 0) + 1
        if r.text is None or not r.text.strip():
            dropped[r.subject_id] = dropped.get(r.subject_id, 0) + 1
            audit.append({
                "action": "drop_record", "subject_id": r.subject_id,
                "day_index": r.day_index, "field": "text", "reason": "missing_text",
            })
            continue
        bad = _range_violation(r)
        if bad is not None:
            dropped[r.subject_id] = dropped.get(r.subject_id, 0) + 1
            audit.append({
                "action": "drop_record", "subject_id": r.subject_id,
                "day_index": r.day_index, "field": bad, "reason": "range",
            })
            continue
        kept.append(r.copy())

    lost_subjects = {s for s in total if dropped.get(s, 0) / total[s] > 0.5}
    for s in sorted(lost_subjects):
        audit.append({
            "action": "drop_subject", "subject_id": s, "day_index": None,
            "field": None, "reason": "over_half_records_dropped",
        })
    kept = [r for r in kept if r.subject_id not in lost_subjects]

    means: dict[tuple[str, str], float] = {}
    present: dict[tuple[str, str], list[float]] = {}
    for r in kept:
        for f in PHYSIO_FIELDS:
            v = getattr(r, f)
            if v is not None:
                present.setdefault((r.subject_id, f), []).append(v)
    for key, vals in present.items():
        means[key] = float(np.mean(vals))

    unimputable: set[str] = set()
    for r in kept:
        for f in PHYSIO_FIELDS:
            if getattr(r, f) is None and (r.subject_id, f) not in means:
                if r.subject_id not in unimputable:
                    unimputable.add(r.subject_id)
                    audit.append({
                        "action": "drop_subject", "subject_id": r.subject_id,
                        "day_index": None, "field": f, "reason": "no_values_to_impute",
                    })
    kept = [r for r in kept if r.subject_id not in unimputable]

    for r in kept:
        for f in PHYSIO_FIELDS:
            if getattr(r, f) is None:
                value = means[(r.subject_id, f)]
                setattr(r, f, value)
                r.provenance[f] = IMPUTED
                audit.append({
                    "action": "impute", "subject_id": r.subject_id,
                    "day_index": r.day_index, "field": f, "reason": "subject_mean",
                    "value": value,
                })
    for r in kept:
        r.validate()
    return kept, audit


def welch_t_test(sample_a, sample_b) -> tuple[float, float]:
    """Two-sided unequal-variance t test via the Student-t survival function."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DataError(f"welch_t_test: need at least 2 values per sample, got {a.size} and {b.size}")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va <= 0 or vb <= 0:
        raise DataError("welch_t_test: degenerate (zero-variance) sample")
    sa, sb = va / a.size, vb / b.size
    t = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * float(stats.t.sf(abs(t), df))
    return float(t), min(p, 1.0)


@dataclass
class FeatureSpec:
    """Retained physiological features with training-set z-score statistics."""

    features: list[str]
    means: dict[str, float]
    stds: dict[str, float]
    pvalues: dict[str, float] = field(default_factory=dict)
    alpha: float = 0.01

    def validate(self) -> None:
        for f in self.features:
            if f not in self.means or f not in self.stds:
                raise DataError(f"feature spec missing statistics for {f}")
            if not self.stds[f] > 0:
                raise DataError(f"feature spec has non-positive std for {f}")

    def to_dict(self) -> dict:
        return {
            "features": list(self.features),
            "means": dict(self.means),
            "stds": dict(self.stds),
            "pvalues": dict(self.pvalues),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        spec = cls(
            features=list(d["features"]),
            means=dict(d["means"]),
            stds=dict(d["stds"]),
            pvalues=dict(d.get("pvalues", {})),
            alpha=float(d.get("alpha", 0.01)),
        )
        spec.validate()
        return spec


def _column(records: list[DailyRecord], name: str) -> np.ndarray:
    vals = []
    for r in records:
        v = getattr(r, name)
        if v is None:
            raise DataError(f"record {r.subject_id}/{r.day_index} missing {name}; run clean first")
        vals.append(v)
    return np.asarray(vals, dtype=np.float64)


def select_features(records: list[DailyRecord], labels, alpha: float = 0.01) -> FeatureSpec:
    """Keep features whose group difference is significant at alpha."""
    y = np.asarray(labels, dtype=bool)
    if y.shape != (len(records),):
        raise DataError(f"select_features: {len(records)} records vs {y.shape} labels")
    if y.all() or not y.any():
        raise DataError("select_features: need both classes present")
    retained = []
    pvalues = {}
    means = {}
    stds = {}
    for f in PHYSIO_FIELDS:
        col = _column(records, f)
        _, p = welch_t_test(col[y], col[~y])
        pvalues[f] = p
        if p < alpha:
            retained.append(f)
            means[f] = float(col.mean())
            std = float(col.std())
            if std <= 0:
                raise DataError(f"select_features: zero variance in retained feature {f}")
            stds[f] = std
    if not retained:
        raise DataError(f"select_features: no feature significant at alpha={alpha}")
    return FeatureSpec(features=retained, means=means, stds=stds, pvalues=pvalues, alpha=alpha)


def normalize(records: list[DailyRecord], spec: FeatureSpec) -> np.ndarray:
    """Z-score matrix (n_records, n_retained) using the FeatureSpec training statistics."""
    spec.validate()
    cols = [(_column(records, f) - spec.means[f]) / spec.stds[f] for f in spec.features]
    return np.stack(cols, axis=1)


class PhysioFeatures(TransformerMixin, BaseEstimator):
    """Estimator wrapper: significance selection + z-scoring of daily physiology."""

    def __init__(self, alpha: float = 0.01):
        self.alpha = alpha

    def fit(self, X: list[DailyRecord], y=None):
        if y is None:
            raise DataError("PhysioFeatures.fit needs class labels")
        self.spec_ = select_features(X, y, alpha=self.alpha)
        self.features_ = list(self.spec_.features)
        self.n_features_out_ = len(self.features_)
        return self

    def transform(self, X: list[DailyRecord]) -> np.ndarray:
        check_is_fitted(self, "spec_")
        return normalize(X, self.spec_)
