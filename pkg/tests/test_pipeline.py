"""End-to-end data preparation: labels, partitions, augmentation, guards."""

import numpy as np
import pytest

from metsfuse.errors import DataError, LeakageError
from metsfuse.pipeline import (
    _replan,
    augment_with_plan,
    guard_augmented_sources,
    guard_feature_spec,
    guard_fit_records,
    guard_vocabulary,
    labels_from_panels,
    partition_indices,
    prepare_dataset,
    record_labels,
)
from metsfuse.records import AUGMENTED, MEASURED, DailyRecord, ExamPanel
from metsfuse.split import TEST, split
from metsfuse.text import Vocabulary

POS_TEXTS = [
    "felt breathless climbing the stairs today",
    "short rest after a slow loop outside",
    "tired quickly during light chores",
    "needed a pause walking to the shop",
]
NEG_TEXTS = [
    "walked briskly around the park today",
    "easy jog before breakfast felt fine",
    "long evening stroll with no trouble",
    "carried groceries home without stopping",
]


def mets_panel(sid):
    return ExamPanel(sid, "female", 74.0, 157.0, 95.0, 28.2, 7.0, 144.0, 80.0, 2.1, 1.0)


def healthy_panel(sid):
    return ExamPanel(sid, "female", 72.0, 160.0, 80.0, 21.2, 5.4, 134.0, 78.0, 1.36, 1.47)


def build_cohort(days=4, dirty=False):
    records, panels = [], {}
    for s in range(4):
        sid = f"P{s:02d}"
        panels[sid] = mets_panel(sid)
        for d in range(days):
            records.append(DailyRecord(
                sid, d, POS_TEXTS[d % 4], 74.0 + (d % 3), 114.0 + (d % 3),
                96.0 + (d % 2), 3000.0 + 100 * d,
            ))
    for s in range(8):
        sid = f"N{s:02d}"
        panels[sid] = healthy_panel(sid)
        for d in range(days):
            records.append(DailyRecord(
                sid, d, NEG_TEXTS[d % 4], 60.0 + (d % 3), 100.0 + (d % 3),
                96.0 + (d % 2), 9000.0 + 150 * d,
            ))
    if dirty:
        records.append(DailyRecord("N00", days, None, 61.0, 101.0, 96.0, 9100.0))
    return records, panels


def prepared(**kw):
    records, panels = build_cohort(dirty=True)
    args = dict(seed=0, test_fraction=0.25, k=2, target_ratio=0.5, feature_alpha=0.01)
    args.update(kw)
    return prepare_dataset(records, panels, **args)


class TestPrepareDataset:
    def test_cleaning_feeds_the_split(self):
        data = prepared()
        assert data.n_cleaned == 48
        assert any(a["action"] == "drop_record" for a in data.audit)
        data.plan.validate()

    def test_labels_match_panel_criteria(self):
        data = prepared()
        assert data.labels_by_subject == {
            **{f"P{s:02d}": True for s in range(4)},
            **{f"N{s:02d}": False for s in range(8)},
        }

    def test_augmented_copies_balance_non_test(self):
        data = prepared()
        copies = data.records[data.n_cleaned:]
        assert copies and all(r.provenance["text"] == AUGMENTED for r in copies)
        y = data.labels()
        non_test = [i for i in range(len(data.records))
                    if data.plan.subject_to_partition[data.records[i].subject_id] != TEST]
        pos = int(y[non_test].sum())
        assert pos == len(non_test) - pos

    def test_copies_never_in_test_partition(self):
        data = prepared()
        test_set = set(data.plan.test_record_ids)
        assert all(i < data.n_cleaned for i in test_set)
        for i in range(data.n_cleaned, len(data.records)):
            assert data.plan.subject_to_partition[data.records[i].subject_id] != TEST

    def test_copies_inherit_source_subject_fold(self):
        data = prepared()
        for f, ids in data.plan.fold_record_ids.items():
            for i in ids:
                assert data.plan.subject_to_partition[data.records[i].subject_id] == f"fold{f}"

    def test_feature_spec_fitted_on_non_test_originals(self):
        data = prepared()
        fit = [r for r in data.cleaned
               if data.plan.subject_to_partition[r.subject_id] != TEST]
        for name in data.feature_spec.features:
            vals = np.array([getattr(r, name) for r in fit])
            assert data.feature_spec.means[name] == pytest.approx(vals.mean(), abs=1e-12)
        assert "spo2_mean" not in data.feature_spec.features
        assert "hr_min" in data.feature_spec.features

    def test_augmentation_can_be_disabled(self):
        data = prepared(target_ratio=None)
        assert len(data.records) == data.n_cleaned
        assert not any(a["action"] == "augment" for a in data.audit)

    def test_audit_notes_augmentation_size(self):
        data = prepared()
        entry = next(a for a in data.audit if a["action"] == "augment")
        assert entry["count"] == len(data.records) - data.n_cleaned
        assert entry["target_ratio"] == 0.5

    def test_record_level_plan_keeps_copies_out_of_test(self):
        data = prepared(level="record")
        assert data.plan.level == "record"
        test_set = set(data.plan.test_record_ids)
        for i in range(data.n_cleaned, len(data.records)):
            assert i not in test_set
        guard_augmented_sources(data.records, data.plan)

    def test_empty_after_cleaning(self):
        records = [DailyRecord("S0", 0, None, 60.0, 100.0, 96.0, 5000.0)]
        with pytest.raises(DataError, match="no records survive"):
            prepare_dataset(records, {"S0": healthy_panel("S0")}, k=2)


class TestPartitionIndices:
    def test_rotation_partitions_are_disjoint_and_complete(self):
        data = prepared()
        for val_fold in (1, 2):
            tr, va, te = partition_indices(data.records, data.plan, val_fold)
            assert not (set(tr) & set(va)) and not (set(tr) & set(te)) and not (set(va) & set(te))
            assert sorted(tr + va + te) == list(range(len(data.records)))
            assert set(te) == set(data.plan.test_record_ids)
            assert set(va) == set(data.plan.fold_record_ids[val_fold])

    def test_val_fold_out_of_range(self):
        data = prepared()
        with pytest.raises(DataError, match="val_fold"):
            partition_indices(data.records, data.plan, 3)


class TestLabels:
    def test_record_labels_align_with_records(self):
        records, panels = build_cohort()
        labels = labels_from_panels(panels)
        y = record_labels(records, labels)
        assert y.tolist() == [1] * 16 + [0] * 32

    def test_record_labels_missing_subject(self):
        records, _ = build_cohort()
        with pytest.raises(DataError, match="S999|no label"):
            record_labels(records + [DailyRecord("S999", 0, "hi", 60.0, 100.0, 96.0, 100.0)],
                          {r.subject_id: False for r in records})


class TestGuards:
    def test_fit_guard_passes_on_honest_indices(self):
        data = prepared()
        tr, _, _ = partition_indices(data.records, data.plan, 1)
        guard_fit_records(tr, data.plan, data.records, val_fold=1)

    def test_fit_guard_catches_test_record(self):
        data = prepared()
        tr, _, te = partition_indices(data.records, data.plan, 1)
        with pytest.raises(LeakageError, match="test-partition"):
            guard_fit_records(tr + [te[0]], data.plan, data.records, val_fold=1)

    def test_fit_guard_catches_validation_record(self):
        data = prepared()
        tr, va, _ = partition_indices(data.records, data.plan, 1)
        with pytest.raises(LeakageError, match="validation-fold"):
            guard_fit_records(tr + [va[0]], data.plan, data.records, val_fold=1)

    def test_augment_guard_catches_test_subject_copy(self):
        data = prepared()
        test_sid = next(s for s, p in data.plan.subject_to_partition.items() if p == TEST)
        poisoned = next(r for r in data.cleaned if r.subject_id == test_sid).copy()
        poisoned.provenance["text"] = AUGMENTED
        with pytest.raises(LeakageError, match="test subject"):
            guard_augmented_sources(data.records + [poisoned], data.plan)

    def test_augment_guard_record_level(self):
        data = prepared(level="record")
        idx = data.plan.test_record_ids[0]
        records = list(data.records)
        bad = records[idx].copy()
        bad.provenance["text"] = AUGMENTED
        records[idx] = bad
        with pytest.raises(LeakageError, match="test partition"):
            guard_augmented_sources(records, data.plan)

    def test_vocabulary_guard(self):
        data = prepared()
        fit = [data.records[i] for i in partition_indices(data.records, data.plan, 1)[0]]
        honest = Vocabulary.build([r.text for r in fit])
        guard_vocabulary(honest, fit)
        tainted = Vocabulary.build([r.text for r in fit] + ["zzyzx only here"])
        with pytest.raises(LeakageError, match="does not occur"):
            guard_vocabulary(tainted, fit)

    def test_feature_spec_guard(self):
        data = prepared()
        fit = [r for r in data.cleaned
               if data.plan.subject_to_partition[r.subject_id] != TEST]
        guard_feature_spec(data.feature_spec, fit)
        tampered = data.feature_spec
        name = tampered.features[0]
        tampered.means[name] += 0.5
        with pytest.raises(LeakageError, match=name):
            guard_feature_spec(tampered, fit)


class TestAugmentWithPlan:
    def test_test_partition_frozen(self):
        records, panels = build_cohort()
        labels = labels_from_panels(panels)
        plan = split(records, labels, test_fraction=0.25, k=2, seed=1)
        full, extended = augment_with_plan(records, plan, labels, 0.5)
        assert extended.test_record_ids == plan.test_record_ids
        assert len(full) > len(records)
        for f in (1, 2):
            assert set(plan.fold_record_ids[f]) <= set(extended.fold_record_ids[f])
        extended.validate()

    def test_already_balanced_is_identity(self):
        records, panels = build_cohort()
        labels = labels_from_panels(panels)
        balanced = records[:16] + records[16:32]
        plan = split(balanced, labels, test_fraction=0.25, k=2, seed=0)
        full, extended = augment_with_plan(balanced, plan, labels, 0.5)
        assert len(full) == len(balanced)
        assert extended.to_dict() == plan.to_dict()

    def test_record_level_copy_follows_source_fold(self):
        records, panels = build_cohort()
        labels = labels_from_panels(panels)
        plan = split(records, labels, test_fraction=0.25, k=2, seed=0, level="record")
        full, extended = augment_with_plan(records, plan, labels, 0.5)
        fold_of = {}
        for f in (1, 2):
            for i in plan.fold_record_ids[f]:
                fold_of[(records[i].subject_id, records[i].day_index, records[i].text)] = f
        for idx in range(len(records), len(full)):
            copy = full[idx]
            fold = next(f for f in (1, 2) if idx in set(extended.fold_record_ids[f]))
            src_fold = fold_of[(copy.subject_id, copy.day_index, copy.provenance.get("source_text", copy.text))]
            assert fold == src_fold

    def test_replan_rejects_test_copies(self):
        records, panels = build_cohort()
        labels = labels_from_panels(panels)
        plan = split(records, labels, test_fraction=0.25, k=2, seed=0)
        extra = records[0].copy()
        with pytest.raises(LeakageError, match="test subject"):
            _replan(plan, records + [extra], ["test"])
