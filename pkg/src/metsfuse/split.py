"""Test/fold partitioning with subject-level isolation.

Default mode assigns whole subjects: the test side takes randomly chosen
subjects per class until it holds about the requested fraction of that
class's records, and the rest go to folds by longest-processing-time
scheduling on class record counts, so folds stay balanced. A record-level
mode exists behind a flag for comparison; it cannot guarantee subject
isolation and is marked as such in the plan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from metsfuse.errors import DataError
from metsfuse.records import DailyRecord
from metsfuse.rng import derived_rng

TEST = "test"


def _fold_name(i: int) -> str:
    return f"fold{i}"


@dataclass
class SplitPlan:
    level: str
    k: int
    seed: int
    test_fraction: float
    subject_to_partition: dict[str, str] = field(default_factory=dict)
    test_record_ids: list[int] = field(default_factory=list)
    fold_record_ids: dict[int, list[int]] = field(default_factory=dict)

    def partition_of(self, record: DailyRecord) -> str:
        """Partition name for a record; augmented copies follow their subject."""
        if self.level != "subject":
            raise DataError("partition_of by subject only applies to subject-level plans")
        part = self.subject_to_partition.get(record.subject_id)
        if part is None:
            raise DataError(f"subject {record.subject_id} not in split plan")
        return part

    def validate(self) -> None:
        if self.level == "subject":
            names = {TEST} | {_fold_name(i) for i in range(1, self.k + 1)}
            bad = set(self.subject_to_partition.values()) - names
            if bad:
                raise DataError(f"split plan has unknown partitions {sorted(bad)}")
        seen: set[int] = set()
        for ids in [self.test_record_ids, *self.fold_record_ids.values()]:
            overlap = seen & set(ids)
            if overlap:
                raise DataError(f"records {sorted(overlap)[:5]} appear in two partitions")
            seen.update(ids)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "k": self.k,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "subject_to_partition": dict(self.subject_to_partition),
            "test_record_ids": list(self.test_record_ids),
            "fold_record_ids": {str(f): ids for f, ids in self.fold_record_ids.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        plan = cls(
            level=d["level"],
            k=int(d["k"]),
            seed=int(d["seed"]),
            test_fraction=float(d["test_fraction"]),
            subject_to_partition=dict(d.get("subject_to_partition", {})),
            test_record_ids=[int(i) for i in d.get("test_record_ids", [])],
            fold_record_ids={int(f): [int(i) for i in ids] for f, ids in d.get("fold_record_ids", {}).items()},
        )
        plan.validate()
        return plan


def _pick_test_subjects(order: list[str], counts: dict[str, int], target: float, k: int) -> list[str]:
    chosen: list[str] = []
    total = 0
    for sid in order:
        if len(order) - len(chosen) - 1 < k:
            break
        with_it = total + counts[sid]
        if abs(with_it - target) <= abs(total - target):
            chosen.append(sid)
            total = with_it
    if not chosen:
        chosen = [min(order, key=lambda s: (counts[s], s))]
    return chosen


def split(
    records: list[DailyRecord],
    labels_by_subject: dict[str, bool],
    test_fraction: float = 0.25,
    k: int = 3,
    seed: int = 0,
    level: str = "subject",
) -> SplitPlan:
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"split: test_fraction must be in (0, 1), got {test_fraction}")
    if k < 2:
        raise DataError(f"split: need k >= 2 folds, got {k}")
    if level not in ("subject", "record"):
        raise DataError(f"split: unknown level {level!r}")
    missing = {r.subject_id for r in records} - set(labels_by_subject)
    if missing:
        raise DataError(f"split: no label for subjects {sorted(missing)}")
    if level == "record":
        return _split_records(records, labels_by_subject, test_fraction, k, seed)

    counts: dict[str, int] = {}
    for r in records:
        counts[r.subject_id] = counts.get(r.subject_id, 0) + 1
    by_class: dict[bool, list[str]] = {True: [], False: []}
    for sid in sorted(counts):
        by_class[bool(labels_by_subject[sid])].append(sid)
    for label, sids in by_class.items():
        if len(sids) < k + 1:
            raise DataError(
                f"split: class {label} has {len(sids)} subjects, need at least {k + 1}"
            )

    assignment: dict[str, str] = {}
    for label in (True, False):
        sids = by_class[label]
        rng = derived_rng(seed, "split", "test", "pos" if label else "neg")
        order = list(sids)
        rng.shuffle(order)
        class_total = sum(counts[s] for s in sids)
        test_sids = _pick_test_subjects(order, counts, test_fraction * class_total, k)
        for sid in test_sids:
            assignment[sid] = TEST
        rest = sorted(set(sids) - set(test_sids), key=lambda s: (-counts[s], s))
        load = {i: 0 for i in range(1, k + 1)}
        for sid in rest:
            fold = min(load, key=lambda i: (load[i], i))
            assignment[sid] = _fold_name(fold)
            load[fold] += counts[sid]

    plan = SplitPlan(
        level="subject", k=k, seed=seed, test_fraction=test_fraction,
        subject_to_partition=assignment,
    )
    plan.fold_record_ids = {i: [] for i in range(1, k + 1)}
    for idx, r in enumerate(records):
        part = assignment[r.subject_id]
        if part == TEST:
            plan.test_record_ids.append(idx)
        else:
            plan.fold_record_ids[int(part.removeprefix("fold"))].append(idx)
    plan.validate()
    return plan


def _split_records(records, labels_by_subject, test_fraction, k, seed) -> SplitPlan:
    by_class: dict[bool, list[int]] = {True: [], False: []}
    for idx, r in enumerate(records):
        by_class[bool(labels_by_subject[r.subject_id])].append(idx)
    for label, ids in by_class.items():
        if len(ids) < k + 1:
            raise DataError(f"split: class {label} has {len(ids)} records, need at least {k + 1}")
    plan = SplitPlan(level="record", k=k, seed=seed, test_fraction=test_fraction)
    plan.fold_record_ids = {i: [] for i in range(1, k + 1)}
    for label in (True, False):
        ids = list(by_class[label])
        rng = derived_rng(seed, "split", "records", "pos" if label else "neg")
        rng.shuffle(ids)
        n_test = max(1, math.floor(test_fraction * len(ids) + 0.5))
        plan.test_record_ids.extend(ids[:n_test])
        for j, idx in enumerate(ids[n_test:]):
            plan.fold_record_ids[1 + j % k].append(idx)
    plan.test_record_ids.sort()
    for ids in plan.fold_record_ids.values():
        ids.sort()
    plan.validate()
    return plan
