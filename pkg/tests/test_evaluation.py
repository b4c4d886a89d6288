"""Report shaping and aggregation for CV results and the imbalance sweep."""

import math

import numpy as np
import pytest

from metsfuse.errors import DataError
from metsfuse.evaluation import (
    METRIC_KEYS,
    EvalReport,
    RotationResult,
    SweepCell,
    SweepTable,
    _check_fold_classes,
    cross_validate,
    score_model,
)
from metsfuse.split import SplitPlan

# published three-rotation result used as a layout fixture (percent scale)
FOLD_ROWS = [
    (1, (2, 3), 70.5, 71.3, 67.1, 69.1, 77.0),
    (2, (1, 3), 69.1, 64.3, 83.5, 72.6, 82.3),
    (3, (1, 2), 71.7, 68.6, 78.2, 73.1, 82.2),
]


def fixture_report():
    report = EvalReport(architecture="TS_HCL", k=3, seed=0)
    for vf, tf, *vals in FOLD_ROWS:
        d = dict(zip(METRIC_KEYS, [v / 100.0 for v in vals]))
        report.rotations.append(
            RotationResult(val_fold=vf, train_folds=tf, val=d, test=dict(d), best_epoch=1, n_epochs=1)
        )
    return report


class TestEvalReport:
    def test_csv_layout_frozen(self):
        # aggregate cells hand-checked: e.g. AUROC mean 241.5/3 = 80.5 and
        # population std sqrt(18.38/3) = 2.4752 -> "2.48"
        assert fixture_report().to_csv_text("val") == (
            "Model,Datasets,ACC(%),PRE(%),REC(%),F1(%),AUROC(%)\n"
            'TS_HCL,"Train (Fold2, 3), Val (Fold1)",70.5,71.3,67.1,69.1,77.0\n'
            ',"Train (Fold1, 3), Val (Fold2)",69.1,64.3,83.5,72.6,82.3\n'
            ',"Train (Fold1, 2), Val (Fold3)",71.7,68.6,78.2,73.1,82.2\n'
            ",Average (Std),70.4 (1.06),68.1 (2.88),76.3 (6.83),71.6 (1.78),80.5 (2.48)\n"
        )

    def test_aggregate_mean_and_population_std(self):
        report = fixture_report()
        agg = report.aggregate("val")
        for key in METRIC_KEYS:
            col = [getattr(r, "val")[key] for r in report.rotations]
            assert abs(agg[key]["mean"] - sum(col) / 3) <= 1e-12
            mu = sum(col) / 3
            pop = math.sqrt(sum((v - mu) ** 2 for v in col) / 3)
            assert agg[key]["std"] == pytest.approx(pop, abs=1e-12)

    def test_identical_rotations_zero_std(self):
        report = EvalReport(architecture="BASELINE", k=3, seed=0)
        # binary-exact values so the population std is exactly zero
        d = dict(zip(METRIC_KEYS, [0.75, 0.5, 0.25, 0.625, 0.8125]))
        for vf in (1, 2, 3):
            report.rotations.append(
                RotationResult(vf, tuple(f for f in (1, 2, 3) if f != vf), dict(d), dict(d), 1, 1)
            )
        agg = report.aggregate("test")
        for key in METRIC_KEYS:
            assert agg[key]["std"] == 0.0
            assert agg[key]["mean"] == d[key]

    def test_aggregate_unknown_split(self):
        with pytest.raises(DataError):
            fixture_report().aggregate("train")

    def test_validate_and_to_dict(self):
        report = fixture_report()
        report.validate()
        d = report.to_dict()
        assert d["architecture"] == "TS_HCL" and d["k"] == 3
        assert len(d["rotations"]) == 3
        assert d["rotations"][0]["train_folds"] == [2, 3]
        assert set(d["aggregate"]) == {"val", "test"}

    def test_json_roundtrip_sorted(self):
        import json

        text = fixture_report().to_json()
        assert json.loads(text)["aggregate"]["val"]["AUROC"]["mean"] == pytest.approx(0.805)


class TestScoreModel:
    class _Stub:
        def __init__(self, scores):
            self._p = np.asarray(scores)

        def predict_proba(self, records):
            return np.column_stack([1 - self._p, self._p])

    def test_metric_dictionary(self):
        # preds at 0.5: [1,0,0,1] vs y [1,0,1,0] -> tp=tn=fp=fn=1;
        # AUROC: 3 of 4 (pos, neg) pairs ordered correctly
        clf = self._Stub([0.9, 0.2, 0.4, 0.6])
        out = score_model(clf, [None] * 4, [1, 0, 1, 0])
        assert out == {"ACC": 0.5, "PRE": 0.5, "REC": 0.5, "F1": 0.5, "AUROC": 0.75}


class TestFoldClassChecks:
    def plan(self, fold_ids, test_ids):
        return SplitPlan(
            level="subject", k=len(fold_ids), seed=0, test_fraction=0.25,
            test_record_ids=test_ids,
            fold_record_ids={i + 1: ids for i, ids in enumerate(fold_ids)},
        )

    def test_single_class_fold_named(self):
        y = np.array([1, 0, 1, 0, 1, 0])
        plan = self.plan([[0, 1], [2, 3]], [4, 5])
        _check_fold_classes(plan, y)
        y_bad = np.array([1, 0, 1, 1, 0, 1])
        with pytest.raises(DataError, match="fold2"):
            _check_fold_classes(plan, y_bad)

    def test_single_class_test_partition(self):
        y = np.array([1, 0, 1, 0, 1, 1])
        with pytest.raises(DataError, match="test"):
            _check_fold_classes(self.plan([[0, 1], [2, 3]], [4, 5]), y)

    def test_empty_fold(self):
        with pytest.raises(DataError, match="fold1"):
            _check_fold_classes(self.plan([[], [0, 1]], [2, 3]), np.array([1, 0, 1, 0]))

    def test_cross_validate_needs_two_folds(self):
        plan = self.plan([[0, 1]], [2, 3])
        with pytest.raises(DataError, match="k >= 2"):
            cross_validate("TS_HCL", None, [], {}, plan)


def sweep_fixture():
    table = SweepTable(architecture="TS_HCL", ratios=(0.3, 0.5), seeds=(0,), k=2)
    for ratio, a, b in [(0.3, 0.80, 0.90), (0.5, 0.85, 0.95)]:
        for vf, auc in ((1, a), (2, b)):
            table.cells.append(
                SweepCell(ratio=ratio, seed=0, val_fold=vf,
                          test={k: auc for k in METRIC_KEYS})
            )
    return table


class TestSweepTable:
    Z = 1.959963984540054

    def test_summary_normal_ci(self):
        rows = sweep_fixture().summary()
        assert len(rows) == 2 * len(METRIC_KEYS)
        first = rows[0]
        assert (first["ratio"], first["metric"], first["n_runs"]) == (0.3, "ACC", 2)
        # two runs 0.80/0.90: sample std 0.05*sqrt(2), half-width z*0.05
        assert first["mean"] == pytest.approx(0.85, abs=1e-15)
        half = self.Z * (0.05 * math.sqrt(2)) / math.sqrt(2)
        assert first["ci_low"] == pytest.approx(0.85 - half, abs=1e-12)
        assert first["ci_high"] == pytest.approx(0.85 + half, abs=1e-12)

    def test_summary_row_order(self):
        rows = sweep_fixture().summary()
        assert [(r["ratio"], r["metric"]) for r in rows] == [
            (r, m) for r in (0.3, 0.5) for m in METRIC_KEYS
        ]

    def test_single_run_degenerate_ci(self):
        table = SweepTable(architecture="X", ratios=(0.4,), seeds=(0,), k=1)
        table.cells.append(SweepCell(0.4, 0, 1, {k: 0.7 for k in METRIC_KEYS}))
        row = table.summary()[0]
        assert row["ci_low"] == row["ci_high"] == row["mean"] == 0.7

    def test_mean_accessor(self):
        table = sweep_fixture()
        assert table.mean(0.5) == pytest.approx(0.90, abs=1e-15)
        assert table.mean(0.3, "F1") == pytest.approx(0.85, abs=1e-15)
        with pytest.raises(DataError):
            table.mean(0.45)

    def test_csv_repr_roundtrip(self):
        text = sweep_fixture().to_csv_text()
        lines = text.splitlines()
        assert lines[0] == "ratio,metric,mean,ci_low,ci_high,n_runs"
        assert len(lines) == 1 + 2 * len(METRIC_KEYS)
        cells = lines[1].split(",")
        rows = sweep_fixture().summary()
        assert float(cells[2]) == rows[0]["mean"]
        assert float(cells[3]) == rows[0]["ci_low"]
        assert cells[5] == "2"

    def test_to_dict_carries_cells_and_summary(self):
        d = sweep_fixture().to_dict()
        assert d["ratios"] == [0.3, 0.5] and d["seeds"] == [0]
        assert len(d["cells"]) == 4
        assert len(d["summary"]) == 10
