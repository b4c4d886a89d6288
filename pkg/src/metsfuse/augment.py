"""Minority-class text augmentation.

Two deterministic augmenters ship with the package: a clause filter that
strips clauses mentioning irrelevant topics (weather by default), and a
lexicon round trip that pushes every covered word through a bilingual
gloss and back, collapsing synonyms onto a canonical form the way
back-translation would.
"""
from __future__ import annotations

import math
import re
from importlib import resources
from pathlib import Path
from typing import Callable

from metsfuse.errors import DataError
from metsfuse.records import AUGMENTED, RECORD_FIELDS, DailyRecord

Augmenter = Callable[[str], str]

DEFAULT_IRRELEVANT_PATTERNS = (
    "weather", "rain", "sunny", "cloud", "overcast", "wind", "humid",
    "muggy", "snow", "chilly", "freezing", "scorching", "sweltering",
    "drizzl", "天气", "下雨", "晴", "刮风", "潮湿", "下雪", "闷热",
)

_CLAUSE_DELIMS = ",;，。；！？.!?"
_FINAL_MARKS = "。！？.!?"


class ClauseFilter:
    """Removes clauses containing any configured pattern (case-insensitive)."""

    def __init__(self, patterns: tuple[str, ...] | None = None):
        self.patterns = tuple(p.lower() for p in (patterns if patterns is not None else DEFAULT_IRRELEVANT_PATTERNS))

    def __call__(self, text: str) -> str:
        parts = re.split(f"([{re.escape(_CLAUSE_DELIMS)}])", text)
        segments = []
        for i in range(0, len(parts), 2):
            clause = parts[i]
            delim = parts[i + 1] if i + 1 < len(parts) else ""
            if clause.strip():
                segments.append((clause, delim))
        kept = [
            (c, d) for c, d in segments
            if not any(p in c.lower() for p in self.patterns)
        ]
        if not kept:
            return text
        out = "".join(c + d for c, d in kept).strip()
        # a dropped final clause can leave a dangling comma; close the sentence
        if out and out[-1] in ",;，；":
            final = text.rstrip()[-1:]
            out = out[:-1] + (final if final in _FINAL_MARKS else "")
        return out


class RoundTripLexicon:
    """Word-level substitution through a bundled bilingual lexicon and back."""

    def __init__(self, path: str | Path | None = None):
        if path is None:
            source = resources.files("metsfuse.data").joinpath("roundtrip_lexicon.tsv")
            raw = source.read_text(encoding="utf-8")
        else:
            raw = Path(path).read_text(encoding="utf-8")
        to_gloss: dict[str, str] = {}
        gloss_canonical: dict[str, str] = {}
        for lineno, line in enumerate(raw.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            word, _, gloss = line.partition("\t")
            if not word or not gloss:
                raise DataError(f"lexicon line {lineno}: expected word<TAB>gloss, got {line!r}")
            word = word.lower()
            to_gloss.setdefault(word, gloss)
            gloss_canonical.setdefault(gloss, word)
        self.canonical = {w: gloss_canonical[g] for w, g in to_gloss.items()}

    def __len__(self) -> int:
        return len(self.canonical)

    def _sub(self, m: re.Match) -> str:
        w = m.group(0)
        c = self.canonical.get(w.lower())
        if c is None:
            return w
        return c.capitalize() if w[0].isupper() else c

    def __call__(self, text: str) -> str:
        return re.sub(r"[A-Za-z]+", self._sub, text)


def default_augmenters() -> list[Augmenter]:
    return [ClauseFilter(), RoundTripLexicon()]


def _copy_plan(
    records: list[DailyRecord],
    target_ratio: float,
    labels_by_subject: dict[str, bool],
) -> tuple[list[DailyRecord], int]:
    """Sorted minority source records and the number of copies needed."""
    if not 0.0 < target_ratio <= 0.5:
        raise DataError(f"augment: target_ratio must be in (0, 0.5], got {target_ratio}")
    missing = {r.subject_id for r in records} - set(labels_by_subject)
    if missing:
        raise DataError(f"augment: no label for subjects {sorted(missing)}")
    pos = [r for r in records if labels_by_subject[r.subject_id]]
    neg = [r for r in records if not labels_by_subject[r.subject_id]]
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    if not minority:
        raise DataError("augment: minority class is empty")
    m, big = len(minority), len(majority)
    wanted = math.ceil(target_ratio * big / (1.0 - target_ratio))
    sources = sorted(minority, key=lambda r: (r.subject_id, r.day_index))
    return sources, max(0, wanted - m)


def copy_sources(
    records: list[DailyRecord],
    target_ratio: float,
    labels_by_subject: dict[str, bool],
) -> list[DailyRecord]:
    """The source record behind each copy augment() would create, in order."""
    sources, n_new = _copy_plan(records, target_ratio, labels_by_subject)
    return [sources[i % len(sources)] for i in range(n_new)]


def augment(
    records: list[DailyRecord],
    target_ratio: float,
    augmenters: list[Augmenter],
    labels_by_subject: dict[str, bool],
) -> list[DailyRecord]:
    """Grow the minority class with augmented text copies until its share
    of all records reaches target_ratio. Copies keep the source subject id
    and physiology and are marked augmented; sources are never mutated.
    Copy rounds rotate through the augmenter list in order.
    """
    sources, n_new = _copy_plan(records, target_ratio, labels_by_subject)
    if n_new <= 0:
        return list(records)
    if not augmenters:
        raise DataError(f"augment: need {n_new} new records but no augmenters configured")

    out = list(records)
    for i in range(n_new):
        src = sources[i % len(sources)]
        aug = augmenters[(i // len(sources)) % len(augmenters)]
        copy = src.copy()
        copy.text = aug(src.text)
        copy.provenance = {f: AUGMENTED for f in RECORD_FIELDS}
        out.append(copy)
    return out
