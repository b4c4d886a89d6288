"""Deterministic synthetic cohort generator.

Produces exam panels whose group labels are guaranteed by rejection
sampling, plus daily wearable records with template-built activity texts.
Group separation per channel is dialed by signal strengths in [0, 1]:
0 collapses both groups onto their midpoint, 1 keeps the configured
group means. Everything derives from one seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .records import DailyRecord, ExamPanel, PHYSIO_FIELDS, label_mets
from .rng import derived_rng

# group mean exam values; spread defaults to 10% CV per field
DEFAULT_PANEL_MEANS = {
    "mets": {
        "age": 74.88, "height": 157.44, "bmi": 28.21, "waist": 94.83,
        "sbp": 143.88, "dbp": 79.63, "hdl": 1.51, "tg": 2.09, "fpg": 6.99,
        "male_fraction": 0.125,
    },
    "non_mets": {
        "age": 72.19, "height": 160.13, "bmi": 21.15, "waist": 80.28,
        "sbp": 133.72, "dbp": 78.41, "hdl": 1.47, "tg": 1.36, "fpg": 5.42,
        "male_fraction": 0.100,
    },
}

# daily wearable channels as {field: [mean, cv]}; the hr_min CVs are the
# published 9.1% / 15.5% group values, the rest are generator defaults
DEFAULT_PHYSIO = {
    "mets": {
        "hr_min": [62.0, 0.091],
        "hr_max": [128.0, 0.10],
        "spo2_mean": [96.5, 0.01],
        "steps": [4200.0, 0.35],
    },
    "non_mets": {
        "hr_min": [55.0, 0.155],
        "hr_max": [120.0, 0.10],
        "spo2_mean": [96.5, 0.01],
        "steps": [6500.0, 0.35],
    },
}

DEFAULT_SIGNAL = {"text": 0.9, "hr_min": 0.6, "hr_max": 0.3, "steps": 0.3}

ACTIVITIES = (
    "walked in the garden", "did tai chi in the courtyard", "swept the floor",
    "practiced square dancing", "climbed the stairwell", "did the laundry",
    "watered the plants", "played table tennis", "strolled to the market",
    "wiped down the windows",
)

NEGATIVE_SENSATIONS = (
    "felt breathless before finishing", "got winded after a few minutes",
    "was gasping and had to stop", "felt chest tightness partway through",
    "was wheezing near the end", "felt dizzy and needed to sit",
    "legs felt heavy and tired quickly",
)

POSITIVE_SENSATIONS = (
    "breathing stayed easy throughout", "felt relaxed and steady",
    "felt energetic the whole time", "had no discomfort at all",
    "finished feeling light and quick", "kept a comfortable pace easily",
)

WEATHER_CLAUSES = (
    "The weather was hot and humid", "It was raining on and off",
    "A cold wind was blowing outside", "The morning was sunny and mild",
)

_PANEL_CV = 0.10
_MAX_PANEL_ATTEMPTS = 1000


@dataclass
class CohortSpec:
    n_mets: int = 8
    n_non_mets: int = 32
    days: int = 28
    extra_mets_days: int = 10
    panel_means: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_PANEL_MEANS)))
    physio: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_PHYSIO)))
    signal: dict = field(default_factory=lambda: dict(DEFAULT_SIGNAL))
    weather_prob: float = 0.3
    missing_rate: float = 0.0
    outlier_rate: float = 0.0
    missing_text_rate: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_mets < 1 or self.n_non_mets < 1:
            raise DataError("cohort spec: both groups need at least one subject")
        if self.days < 1 or self.extra_mets_days < 0:
            raise DataError("cohort spec: days must be >= 1 and extra days >= 0")
        for group in ("mets", "non_mets"):
            if group not in self.panel_means or group not in self.physio:
                raise DataError(f"cohort spec: missing group {group!r}")
            for fname in PHYSIO_FIELDS:
                pair = self.physio[group].get(fname)
                if not pair or len(pair) != 2:
                    raise DataError(f"cohort spec: physio {group}/{fname} needs [mean, cv]")
                mean, cv = pair
                if mean <= 0 or cv < 0:
                    raise DataError(
                        f"cohort spec: physio {group}/{fname} mean must be > 0 and cv >= 0"
                    )
        for key in ("text", "hr_min", "hr_max", "steps"):
            s = self.signal.get(key)
            if s is None or not 0.0 <= s <= 1.0:
                raise DataError(f"cohort spec: signal {key!r} must be in [0, 1], got {s}")
        for key in ("weather_prob", "missing_rate", "outlier_rate", "missing_text_rate"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"cohort spec: {key} must be in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return {
            "n_mets": self.n_mets,
            "n_non_mets": self.n_non_mets,
            "days": self.days,
            "extra_mets_days": self.extra_mets_days,
            "panel_means": json.loads(json.dumps(self.panel_means)),
            "physio": json.loads(json.dumps(self.physio)),
            "signal": dict(self.signal),
            "weather_prob": self.weather_prob,
            "missing_rate": self.missing_rate,
            "outlier_rate": self.outlier_rate,
            "missing_text_rate": self.missing_text_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise DataError(f"cohort spec: unknown fields {sorted(extra)}")
        spec = cls(**d)
        spec.validate()
        return spec

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CohortSpec":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        if not isinstance(d, dict):
            raise DataError(f"{path}: cohort spec must be a JSON object")
        return cls.from_dict(d)


def _lognormal(rng: np.random.Generator, mean: float, cv: float) -> float:
    if cv == 0:
        return mean
    sigma2 = math.log(1.0 + cv * cv)
    mu = math.log(mean) - 0.5 * sigma2
    return float(rng.lognormal(mu, math.sqrt(sigma2)))


def _effective_mean(spec: CohortSpec, group: str, fname: str) -> float:
    """Pull the two group means toward their midpoint by 1 - signal."""
    m = spec.physio[group][fname][0]
    other = "non_mets" if group == "mets" else "mets"
    mid = 0.5 * (m + spec.physio[other][fname][0])
    s = spec.signal.get(fname, 1.0) if fname in ("hr_min", "hr_max", "steps") else 1.0
    return mid + s * (m - mid)


def _draw_panel(spec: CohortSpec, subject_id: str, group: str, rng: np.random.Generator) -> ExamPanel:
    means = spec.panel_means[group]
    want_mets = group == "mets"
    for _ in range(_MAX_PANEL_ATTEMPTS):
        vals = {
            k: _lognormal(rng, means[k], _PANEL_CV)
            for k in ("age", "height", "bmi", "waist", "sbp", "dbp", "hdl", "tg", "fpg")
        }
        if vals["dbp"] >= vals["sbp"]:
            continue
        panel = ExamPanel(
            subject_id=subject_id,
            sex="male" if rng.random() < means["male_fraction"] else "female",
            **vals,
        )
        if label_mets(panel).is_mets == want_mets:
            panel.validate()
            return panel
    raise DataError(
        f"cohort spec: could not draw a {group} panel for {subject_id} in "
        f"{_MAX_PANEL_ATTEMPTS} attempts; group means sit on the wrong side "
        f"of the diagnostic thresholds"
    )


def _daily_text(spec: CohortSpec, group: str, rng: np.random.Generator) -> str:
    p_neg = 0.5 + 0.5 * spec.signal["text"] * (1.0 if group == "mets" else -1.0)
    activity = ACTIVITIES[int(rng.integers(len(ACTIVITIES)))]
    minutes = int(rng.integers(10, 61))
    if rng.random() < p_neg:
        sensation = NEGATIVE_SENSATIONS[int(rng.integers(len(NEGATIVE_SENSATIONS)))]
    else:
        sensation = POSITIVE_SENSATIONS[int(rng.integers(len(POSITIVE_SENSATIONS)))]
    text = f"Today I {activity} for {minutes} minutes, {sensation}."
    if rng.random() < spec.weather_prob:
        text += f" {WEATHER_CLAUSES[int(rng.integers(len(WEATHER_CLAUSES)))]}."
    return text


def _corrupt(spec: CohortSpec, r: DailyRecord, rng: np.random.Generator) -> None:
    if spec.missing_text_rate and rng.random() < spec.missing_text_rate:
        r.text = None
    for fname in PHYSIO_FIELDS:
        if spec.missing_rate and rng.random() < spec.missing_rate:
            setattr(r, fname, None)
    if spec.outlier_rate and rng.random() < spec.outlier_rate:
        fname = PHYSIO_FIELDS[int(rng.integers(len(PHYSIO_FIELDS)))]
        bad = {"hr_min": 5.0, "hr_max": 300.0, "spo2_mean": 30.0, "steps": 250000.0}[fname]
        setattr(r, fname, bad)


def generate(spec: CohortSpec) -> tuple[dict[str, ExamPanel], list[DailyRecord]]:
    """Panels keyed by subject id plus one record per subject-day."""
    spec.validate()
    groups = [("mets", i) for i in range(spec.n_mets)] + [
        ("non_mets", i) for i in range(spec.n_non_mets)
    ]
    panels: dict[str, ExamPanel] = {}
    records: list[DailyRecord] = []
    for n, (group, _) in enumerate(groups):
        sid = f"S{n + 1:03d}"
        panels[sid] = _draw_panel(spec, sid, group, derived_rng(spec.seed, "panel", sid))
        body_rng = derived_rng(spec.seed, "physio", sid)
        text_rng = derived_rng(spec.seed, "text", sid)
        corrupt_rng = derived_rng(spec.seed, "corrupt", sid)
        n_days = spec.days + (spec.extra_mets_days if group == "mets" else 0)
        for day in range(1, n_days + 1):
            hr_a = _lognormal(body_rng, _effective_mean(spec, group, "hr_min"),
                              spec.physio[group]["hr_min"][1])
            hr_b = _lognormal(body_rng, _effective_mean(spec, group, "hr_max"),
                              spec.physio[group]["hr_max"][1])
            spo2 = min(100.0, _lognormal(body_rng, _effective_mean(spec, group, "spo2_mean"),
                                         spec.physio[group]["spo2_mean"][1]))
            steps = round(_lognormal(body_rng, _effective_mean(spec, group, "steps"),
                                     spec.physio[group]["steps"][1]))
            r = DailyRecord(
                subject_id=sid,
                day_index=day,
                text=_daily_text(spec, group, text_rng),
                hr_min=round(min(hr_a, hr_b), 1),
                hr_max=round(max(hr_a, hr_b), 1),
                spo2_mean=round(spo2, 1),
                steps=float(steps),
            )
            _corrupt(spec, r, corrupt_rng)
            records.append(r)
    return panels, records
