import dataclasses

import pytest

from metsfuse.errors import DataError
from metsfuse.records import (
    AUGMENTED,
    DailyRecord,
    ExamPanel,
    MEASURED,
    label_mets,
    read_panels,
    read_records,
    write_panels,
    write_records,
    write_records_csv,
)


def make_panel(**kw):
    base = dict(
        subject_id="S001", sex="female", age=73.0, height=158.0, waist=88.0,
        bmi=24.0, fpg=5.4, sbp=130.0, dbp=78.0, tg=1.3, hdl=1.5,
    )
    base.update(kw)
    return ExamPanel(**base)


class TestLabeler:
    def test_group_mean_profile_hits_all_four_criteria(self):
        # typical positive-group averages: high adiposity, glycemia,
        # pressure, and triglycerides at once
        panel = make_panel(bmi=28.21, fpg=6.99, sbp=143.88, dbp=79.63, tg=2.09, hdl=1.51)
        label = label_mets(panel)
        assert label.adiposity and label.glycemia and label.blood_pressure and label.lipids
        assert label.criteria_count == 4
        assert label.is_mets

    def test_group_mean_profile_negative_hits_none(self):
        panel = make_panel(bmi=21.15, fpg=5.42, sbp=133.72, dbp=78.41, tg=1.36, hdl=1.47)
        label = label_mets(panel)
        assert label.criteria_count == 0
        assert not label.is_mets

    def test_exactly_three_criteria_is_positive(self):
        panel = make_panel(bmi=26.0, fpg=6.5, sbp=141.0)
        assert label_mets(panel).criteria_count == 3
        assert label_mets(panel).is_mets

    def test_two_criteria_is_negative(self):
        panel = make_panel(bmi=26.0, fpg=6.5)
        assert label_mets(panel).criteria_count == 2
        assert not label_mets(panel).is_mets

    def test_threshold_boundaries_inclusive(self):
        assert label_mets(make_panel(bmi=25.0)).adiposity
        assert not label_mets(make_panel(bmi=24.999)).adiposity
        assert label_mets(make_panel(fpg=6.1)).glycemia
        assert label_mets(make_panel(sbp=140.0)).blood_pressure
        assert label_mets(make_panel(dbp=90.0, sbp=150.0)).blood_pressure
        assert label_mets(make_panel(tg=1.7)).lipids

    def test_secondary_glycemia_routes(self):
        assert label_mets(make_panel(two_hpg=7.8)).glycemia
        assert not label_mets(make_panel(two_hpg=7.7)).glycemia
        assert label_mets(make_panel(diagnosed_diabetes=True)).glycemia
        assert label_mets(make_panel(diagnosed_hypertension=True)).blood_pressure

    def test_hdl_cut_depends_on_sex(self):
        # below 1.0 counts for women, only below 0.9 for men
        assert label_mets(make_panel(sex="female", hdl=0.95)).lipids
        assert not label_mets(make_panel(sex="male", hdl=0.95)).lipids
        assert label_mets(make_panel(sex="male", hdl=0.89)).lipids

    def test_monotone_in_each_risk_direction(self):
        base = make_panel()
        worse = make_panel(bmi=40.0, fpg=10.0, sbp=180.0, dbp=110.0, tg=5.0, hdl=0.5)
        assert label_mets(worse).criteria_count >= label_mets(base).criteria_count

    def test_missing_required_field_raises(self):
        panel = dataclasses.replace(make_panel(), fpg=None)
        with pytest.raises(DataError, match="fpg"):
            label_mets(panel)


class TestPanelValidation:
    def test_valid_panel_passes(self):
        make_panel().validate()

    def test_bad_sex(self):
        with pytest.raises(DataError, match="sex"):
            make_panel(sex="f").validate()

    def test_nonpositive_field(self):
        with pytest.raises(DataError, match="positive"):
            make_panel(age=0.0).validate()

    def test_dbp_must_sit_below_sbp(self):
        with pytest.raises(DataError, match="dbp"):
            make_panel(sbp=80.0, dbp=95.0).validate()


class TestDailyRecord:
    def test_validate_rejects_inverted_heart_rates(self):
        r = DailyRecord("S001", 1, "walked", hr_min=120.0, hr_max=60.0, spo2_mean=96.0, steps=100.0)
        with pytest.raises(DataError, match="hr_min"):
            r.validate()

    def test_validate_bounds(self):
        r = DailyRecord("S001", 1, "x", hr_min=60.0, hr_max=100.0, spo2_mean=45.0, steps=10.0)
        with pytest.raises(DataError, match="spo2"):
            r.validate()
        r = DailyRecord("S001", 1, "x", hr_min=60.0, hr_max=100.0, spo2_mean=96.0, steps=-5.0)
        with pytest.raises(DataError, match="steps"):
            r.validate()

    def test_copy_detaches_provenance(self):
        r = DailyRecord("S001", 1, "x", 60.0, 100.0, 96.0, 10.0)
        c = r.copy()
        c.provenance["text"] = AUGMENTED
        assert r.provenance["text"] == MEASURED

    def test_none_fields_skip_validation(self):
        DailyRecord("S001", 1, None, None, None, None, None).validate()


class TestRoundTrips:
    def _records(self):
        return [
            DailyRecord("S001", 1, "walked 中文 text", 58.0, 122.5, 96.5, 4300.0),
            DailyRecord("S002", 3, None, None, 110.0, 97.1, 5000.0),
        ]

    def test_records_jsonl_roundtrip(self, tmp_path):
        path = tmp_path / "r.jsonl"
        write_records(path, self._records())
        assert read_records(path) == self._records()

    def test_bad_record_line_reports_lineno(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text('{"subject_id": "S001", "day_index": 1}\n{"day_index": 2}\n')
        with pytest.raises(DataError, match="2"):
            read_records(path)

    def test_panels_roundtrip(self, tmp_path):
        panels = {"S001": make_panel(), "S002": make_panel(subject_id="S002", sex="male")}
        path = tmp_path / "p.json"
        write_panels(path, panels)
        assert read_panels(path) == panels

    def test_csv_export_flattens_provenance(self, tmp_path):
        path = tmp_path / "r.csv"
        write_records_csv(path, self._records())
        lines = path.read_text().splitlines()
        assert lines[0] == "subject_id,day_index,text,hr_min,hr_max,spo2_mean,steps,provenance"
        assert "text=measured" in lines[1]
