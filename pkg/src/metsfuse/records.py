"""Domain records: exam panels, the syndrome labeler, and daily entries.

File formats: daily records as JSON lines (one object per line, field
names exactly as the dataclass), exam panels as one JSON object keyed by
subject id, audit logs as JSON lines, CSV export with a provenance
column.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from metsfuse.errors import DataError

MEASURED = "measured"
IMPUTED = "imputed"
AUGMENTED = "augmented"

PHYSIO_FIELDS = ("hr_min", "hr_max", "spo2_mean", "steps")
RECORD_FIELDS = ("text",) + PHYSIO_FIELDS


@dataclass
class ExamPanel:
    subject_id: str
    sex: str
    age: float
    height: float
    waist: float
    bmi: float
    fpg: float
    sbp: float
    dbp: float
    tg: float
    hdl: float
    two_hpg: float | None = None
    diagnosed_diabetes: bool = False
    diagnosed_hypertension: bool = False

    def validate(self) -> None:
        if self.sex not in ("male", "female"):
            raise DataError(f"panel {self.subject_id}: sex must be male/female, got {self.sex!r}")
        for name in ("age", "height", "waist", "bmi", "fpg", "sbp", "dbp", "tg", "hdl"):
            v = getattr(self, name)
            if v is None or v <= 0:
                raise DataError(f"panel {self.subject_id}: {name} must be positive, got {v}")
        if self.two_hpg is not None and self.two_hpg <= 0:
            raise DataError(f"panel {self.subject_id}: two_hpg must be positive, got {self.two_hpg}")
        if not self.dbp < self.sbp:
            raise DataError(f"panel {self.subject_id}: dbp {self.dbp} not below sbp {self.sbp}")


@dataclass(frozen=True)
class MetsLabel:
    adiposity: bool
    glycemia: bool
    blood_pressure: bool
    lipids: bool

    @property
    def criteria_count(self) -> int:
        return int(self.adiposity) + int(self.glycemia) + int(self.blood_pressure) + int(self.lipids)

    @property
    def is_mets(self) -> bool:
        return self.criteria_count >= 3


def label_mets(panel: ExamPanel) -> MetsLabel:
    """Four-criterion rule: syndrome positive when three or more hold."""
    missing = [
        name
        for name in ("bmi", "fpg", "sbp", "dbp", "tg", "hdl", "sex")
        if getattr(panel, name) is None
    ]
    if missing:
        raise DataError(f"panel {panel.subject_id}: missing required fields {missing}")
    adiposity = panel.bmi >= 25.0
    glycemia = (
        panel.fpg >= 6.1
        or (panel.two_hpg is not None and panel.two_hpg >= 7.8)
        or panel.diagnosed_diabetes
    )
    blood_pressure = panel.sbp >= 140 or panel.dbp >= 90 or panel.diagnosed_hypertension
    hdl_cut = 0.9 if panel.sex == "male" else 1.0
    lipids = panel.tg >= 1.7 or panel.hdl < hdl_cut
    return MetsLabel(adiposity, glycemia, blood_pressure, lipids)


def _default_provenance() -> dict[str, str]:
    return {f: MEASURED for f in RECORD_FIELDS}


@dataclass
class DailyRecord:
    subject_id: str
    day_index: int
    text: str | None
    hr_min: float | None
    hr_max: float | None
    spo2_mean: float | None
    steps: float | None
    provenance: dict[str, str] = field(default_factory=_default_provenance)

    def validate(self) -> None:
        tag = f"record {self.subject_id}/{self.day_index}"
        if self.hr_min is not None and self.hr_max is not None and self.hr_min > self.hr_max:
            raise DataError(f"{tag}: hr_min {self.hr_min} above hr_max {self.hr_max}")
        if self.spo2_mean is not None and not 50 <= self.spo2_mean <= 100:
            raise DataError(f"{tag}: spo2_mean {self.spo2_mean} outside [50, 100]")
        if self.steps is not None and self.steps < 0:
            raise DataError(f"{tag}: negative steps {self.steps}")

    def copy(self) -> "DailyRecord":
        return replace(self, provenance=dict(self.provenance))


def write_records(path: str | Path, records: list[DailyRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            row = {
                "subject_id": r.subject_id,
                "day_index": r.day_index,
                "text": r.text,
                "hr_min": r.hr_min,
                "hr_max": r.hr_max,
                "spo2_mean": r.spo2_mean,
                "steps": r.steps,
                "provenance": r.provenance,
            }
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[DailyRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append(
                    DailyRecord(
                        subject_id=str(row["subject_id"]),
                        day_index=int(row["day_index"]),
                        text=row.get("text"),
                        hr_min=row.get("hr_min"),
                        hr_max=row.get("hr_max"),
                        spo2_mean=row.get("spo2_mean"),
                        steps=row.get("steps"),
                        provenance=dict(row.get("provenance") or _default_provenance()),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad record line: {exc}") from exc
    return records


def write_panels(path: str | Path, panels: dict[str, ExamPanel]) -> None:
    doc = {
        sid: {
            "sex": p.sex,
            "age": p.age,
            "height": p.height,
            "waist": p.waist,
            "bmi": p.bmi,
            "fpg": p.fpg,
            "sbp": p.sbp,
            "dbp": p.dbp,
            "tg": p.tg,
            "hdl": p.hdl,
            "two_hpg": p.two_hpg,
            "diagnosed_diabetes": p.diagnosed_diabetes,
            "diagnosed_hypertension": p.diagnosed_hypertension,
        }
        for sid, p in panels.items()
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def read_panels(path: str | Path) -> dict[str, ExamPanel]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: bad panel file: {exc}") from exc
    panels = {}
    for sid, row in doc.items():
        try:
            panels[sid] = ExamPanel(subject_id=sid, **row)
        except TypeError as exc:
            raise DataError(f"{path}: panel {sid}: {exc}") from exc
    return panels


def write_records_csv(path: str | Path, records: list[DailyRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject_id", "day_index", "text", "hr_min", "hr_max", "spo2_mean", "steps", "provenance"])
        for r in records:
            prov = ";".join(f"{k}={r.provenance.get(k, MEASURED)}" for k in RECORD_FIELDS)
            w.writerow([r.subject_id, r.day_index, r.text, r.hr_min, r.hr_max, r.spo2_mean, r.steps, prov])


def write_audit_log(path: str | Path, entries: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n")
