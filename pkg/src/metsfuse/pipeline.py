"""Dataset assembly: labels, partitioning, leakage guards, and the
clean / split / augment flow that turns raw records into training inputs.

Augmentation runs after the split and only over non-test records, so no
augmented copy can ever derive from a test subject. Copies inherit their
source subject's fold (subject-level plans) or their source record's fold
(record-level plans) and therefore appear in training and validation sets
but never in the test set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import augment, copy_sources, default_augmenters
from .errors import DataError, LeakageError
from .preprocess import FeatureSpec, clean, select_features
from .records import AUGMENTED, DailyRecord, ExamPanel, label_mets
from .split import TEST, SplitPlan, split
from .text import Vocabulary, tokenize

Augmenter = object  # callable str -> str


def labels_from_panels(panels: dict[str, ExamPanel]) -> dict[str, bool]:
    return {sid: label_mets(panel).is_mets for sid, panel in panels.items()}


def record_labels(records: list[DailyRecord], labels_by_subject: dict[str, bool]) -> np.ndarray:
    missing = {r.subject_id for r in records} - set(labels_by_subject)
    if missing:
        raise DataError(f"record_labels: no label for subjects {sorted(missing)}")
    return np.array([int(labels_by_subject[r.subject_id]) for r in records], dtype=np.int64)


def partition_indices(
    records: list[DailyRecord], plan: SplitPlan, val_fold: int
) -> tuple[list[int], list[int], list[int]]:
    """Record indices for one rotation: (train = other folds, val, test)."""
    if not 1 <= val_fold <= plan.k:
        raise DataError(f"partition_indices: val_fold {val_fold} outside 1..{plan.k}")
    train: list[int] = []
    for f in range(1, plan.k + 1):
        if f != val_fold:
            train.extend(plan.fold_record_ids[f])
    return sorted(train), list(plan.fold_record_ids[val_fold]), list(plan.test_record_ids)


def guard_fit_records(
    fit_indices, plan: SplitPlan, records: list[DailyRecord], val_fold: int | None = None
) -> None:
    """Reject any attempt to fit on test records (or the held-out fold)."""
    test_set = set(plan.test_record_ids)
    val_set = set(plan.fold_record_ids[val_fold]) if val_fold is not None else set()
    for idx in fit_indices:
        if idx in test_set:
            r = records[idx]
            raise LeakageError(
                f"fit uses test-partition record (subject {r.subject_id}, day {r.day_index})"
            )
        if idx in val_set:
            r = records[idx]
            raise LeakageError(
                f"fit uses validation-fold {val_fold} record "
                f"(subject {r.subject_id}, day {r.day_index})"
            )


def guard_augmented_sources(records: list[DailyRecord], plan: SplitPlan) -> None:
    """No augmented record may derive from a test-partition subject."""
    if plan.level == "subject":
        for r in records:
            if r.provenance.get("text") == AUGMENTED and plan.subject_to_partition.get(
                r.subject_id
            ) == TEST:
                raise LeakageError(
                    f"augmented record derives from test subject {r.subject_id}"
                )
    else:
        test_set = set(plan.test_record_ids)
        for idx, r in enumerate(records):
            if r.provenance.get("text") == AUGMENTED and idx in test_set:
                raise LeakageError(
                    f"augmented record assigned to the test partition "
                    f"(subject {r.subject_id}, day {r.day_index})"
                )


def guard_vocabulary(vocab: Vocabulary, fit_records: list[DailyRecord]) -> None:
    """Every non-reserved vocabulary token must occur in the fitting texts."""
    seen: set[str] = set()
    for r in fit_records:
        seen.update(tokenize(r.text).tokens[1:])
    for tok, idx in vocab.token_to_id.items():
        if idx >= 3 and tok not in seen:
            raise LeakageError(
                f"vocabulary token {tok!r} does not occur in the fitting partition"
            )


def guard_feature_spec(spec: FeatureSpec, fit_records: list[DailyRecord]) -> None:
    """Normalization statistics must be reproducible from the fitting records."""
    spec.validate()
    for name in spec.features:
        vals = np.array([getattr(r, name) for r in fit_records], dtype=np.float64)
        mean = float(vals.mean())
        std = float(vals.std())
        if abs(mean - spec.means[name]) > 1e-9 + 1e-9 * abs(mean) or abs(
            std - spec.stds[name]
        ) > 1e-9 + 1e-9 * abs(std):
            raise LeakageError(
                f"feature spec statistics for {name!r} were not fitted on the "
                f"fitting partition (stored mean {spec.means[name]!r}, "
                f"recomputed {mean!r})"
            )


def _replan(plan: SplitPlan, records: list[DailyRecord], copy_partitions: list[str]) -> SplitPlan:
    """Rebuild positional id lists after augmented copies were appended.

    copy_partitions names the partition of each appended copy, in order.
    """
    n_base = len(records) - len(copy_partitions)
    out = SplitPlan(
        level=plan.level,
        k=plan.k,
        seed=plan.seed,
        test_fraction=plan.test_fraction,
        subject_to_partition=dict(plan.subject_to_partition),
    )
    out.fold_record_ids = {f: list(plan.fold_record_ids[f]) for f in range(1, plan.k + 1)}
    out.test_record_ids = list(plan.test_record_ids)
    for offset, part in enumerate(copy_partitions):
        idx = n_base + offset
        if part == TEST:
            r = records[idx]
            raise LeakageError(
                f"augmented record derives from test subject {r.subject_id}"
            )
        out.fold_record_ids[int(part.removeprefix("fold"))].append(idx)
    out.validate()
    return out


@dataclass
class PreparedData:
    """Everything the training stages consume, in one bundle.

    records holds the cleaned originals followed by augmented copies;
    records[:n_cleaned] are the originals. feature_spec is fitted on the
    cleaned non-test records for reporting; model fits refit their own.
    """

    records: list[DailyRecord]
    n_cleaned: int
    labels_by_subject: dict[str, bool]
    plan: SplitPlan
    feature_spec: FeatureSpec
    audit: list[dict] = field(default_factory=list)

    @property
    def cleaned(self) -> list[DailyRecord]:
        return self.records[: self.n_cleaned]

    def labels(self) -> np.ndarray:
        return record_labels(self.records, self.labels_by_subject)


def augment_with_plan(
    cleaned: list[DailyRecord],
    plan: SplitPlan,
    labels_by_subject: dict[str, bool],
    target_ratio: float,
    augmenters=None,
) -> tuple[list[DailyRecord], SplitPlan]:
    """Augment the non-test portion of cleaned to target_ratio.

    Returns (cleaned + copies, plan extended with the copies). The minority
    share is reached within the non-test records; the test partition is
    never grown.
    """
    if plan.level == "record":
        non_test_ids = [
            i for i in range(len(cleaned)) if i not in set(plan.test_record_ids)
        ]
    else:
        non_test_ids = [
            i
            for i, r in enumerate(cleaned)
            if plan.subject_to_partition[r.subject_id] != TEST
        ]
    non_test = [cleaned[i] for i in non_test_ids]
    grown = augment(non_test, target_ratio, augmenters or default_augmenters(), labels_by_subject)
    copies = grown[len(non_test) :]
    if not copies:
        return list(cleaned), _replan(plan, list(cleaned), [])
    if plan.level == "record":
        # a copy follows its source record's fold
        pos_of = {id(r): non_test_ids[j] for j, r in enumerate(non_test)}
        sources = copy_sources(non_test, target_ratio, labels_by_subject)
        parts = []
        for src in sources:
            src_idx = pos_of[id(src)]
            part = next(
                f"fold{f}"
                for f in range(1, plan.k + 1)
                if src_idx in set(plan.fold_record_ids[f])
            )
            parts.append(part)
    else:
        parts = [plan.subject_to_partition[c.subject_id] for c in copies]
    full = list(cleaned) + copies
    return full, _replan(plan, full, parts)


def prepare_dataset(
    records: list[DailyRecord],
    panels: dict[str, ExamPanel],
    seed: int = 0,
    test_fraction: float = 0.25,
    k: int = 3,
    target_ratio: float | None = 0.5,
    augmenters=None,
    level: str = "subject",
    feature_alpha: float = 0.01,
) -> PreparedData:
    """Run the full preparation flow: clean, split, augment, select features.

    target_ratio=None disables augmentation entirely.
    """
    labels = labels_from_panels(panels)
    cleaned, audit = clean(records)
    if not cleaned:
        raise DataError("prepare_dataset: no records survive cleaning")
    plan = split(cleaned, labels, test_fraction=test_fraction, k=k, seed=seed, level=level)
    if target_ratio is not None:
        full, plan = augment_with_plan(cleaned, plan, labels, target_ratio, augmenters)
        n_copies = len(full) - len(cleaned)
        if n_copies:
            audit.append({"action": "augment", "count": n_copies, "target_ratio": target_ratio})
    else:
        full = list(cleaned)
    guard_augmented_sources(full, plan)
    if plan.level == "record":
        test_set = set(plan.test_record_ids)
        fit_records = [cleaned[i] for i in range(len(cleaned)) if i not in test_set]
    else:
        fit_records = [
            r for r in cleaned if plan.subject_to_partition[r.subject_id] != TEST
        ]
    spec = select_features(fit_records, record_labels(fit_records, labels), alpha=feature_alpha)
    guard_feature_spec(spec, fit_records)
    return PreparedData(
        records=full,
        n_cleaned=len(cleaned),
        labels_by_subject=labels,
        plan=plan,
        feature_spec=spec,
        audit=audit,
    )
