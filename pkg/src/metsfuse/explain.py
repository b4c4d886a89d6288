"""Model interpretation: permutation feature importance over a trained
classifier and a local token-level linear surrogate for single texts.

Importance of a feature is the baseline test AUROC minus the mean AUROC
over k runs in which that feature's values are shuffled across records.
The text field counts as one feature and is shuffled whole.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .metrics import auroc
from .records import DailyRecord, PHYSIO_FIELDS
from .rng import derived_rng
from .text import tokenize

TEXT_FEATURE = "text"


# ---------------------------------------------------------------- PFI


@dataclass
class FeatureImportance:
    feature: str
    importance: float
    permuted_aurocs: list[float]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "importance": self.importance,
            "permuted_aurocs": list(self.permuted_aurocs),
        }


@dataclass
class PfiReport:
    baseline: float
    k: int
    seed: int
    results: list[FeatureImportance] = field(default_factory=list)

    def ranked(self) -> list[FeatureImportance]:
        return sorted(self.results, key=lambda r: (-r.importance, r.feature))

    def validate(self) -> None:
        """importance must equal baseline minus the mean shuffled AUROC."""
        for r in self.results:
            if len(r.permuted_aurocs) != self.k:
                raise DataError(
                    f"pfi report: {r.feature} has {len(r.permuted_aurocs)} runs, expected {self.k}"
                )
            expect = self.baseline - float(np.mean(r.permuted_aurocs))
            if abs(r.importance - expect) > 1e-12:
                raise DataError(
                    f"pfi report: importance of {r.feature} ({r.importance!r}) "
                    f"does not match its shuffled runs ({expect!r})"
                )

    def to_dict(self) -> dict:
        return {
            "baseline_auroc": self.baseline,
            "k": self.k,
            "seed": self.seed,
            "features": [r.to_dict() for r in self.results],
            "ranking": [r.feature for r in self.ranked()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv_text(self) -> str:
        lines = ["rank,feature,importance,baseline_auroc,mean_permuted_auroc"]
        for rank, r in enumerate(self.ranked(), start=1):
            lines.append(
                f"{rank},{r.feature},{r.importance!r},{self.baseline!r},"
                f"{float(np.mean(r.permuted_aurocs))!r}"
            )
        return "\n".join(lines) + "\n"


def _default_features(model) -> list[str]:
    feats = [TEXT_FEATURE]
    retained = getattr(getattr(model, "features_", None), "features_", None)
    feats.extend(retained if retained is not None else PHYSIO_FIELDS)
    return feats


def _permutations(n: int, features: list[str], k: int, seed: int) -> dict[str, list[np.ndarray]]:
    """One shuffled index array per (feature, repetition), stream-derived
    so both scoring routes see identical shuffles."""
    return {
        f: [derived_rng(seed, f, rep).permutation(n) for rep in range(k)]
        for f in features
    }


def _scores_generic(model, records: list[DailyRecord], feature: str, perm: np.ndarray) -> np.ndarray:
    shuffled = []
    for i, r in enumerate(records):
        c = r.copy()
        src = records[int(perm[i])]
        if feature == TEXT_FEATURE:
            c.text = src.text
        else:
            setattr(c, feature, getattr(src, feature))
        shuffled.append(c)
    return model.predict_proba(shuffled)[:, 1]


def pfi(
    model,
    records: list[DailyRecord],
    y,
    features: list[str] | None = None,
    k: int = 50,
    seed: int = 0,
    method: str = "auto",
) -> PfiReport:
    """Permutation importance on held-out records.

    method: "cached" scores shuffles through cached text embeddings and the
    fused head (requires the FusionClassifier API), "records" rebuilds and
    rescores full record lists through predict_proba, "auto" picks cached
    when available. Both routes draw identical shuffles.
    """
    if len(records) < 10:
        raise DataError(f"pfi: need at least 10 records, got {len(records)}")
    if k < 1:
        raise DataError(f"pfi: need k >= 1 shuffles, got {k}")
    y = np.asarray(y).astype(int)
    if y.shape != (len(records),):
        raise DataError(f"pfi: {len(records)} records vs labels of shape {y.shape}")
    features = list(features) if features is not None else _default_features(model)
    known = (TEXT_FEATURE,) + PHYSIO_FIELDS
    for f in features:
        if f not in known:
            raise DataError(f"pfi: unknown feature {f!r}; expected one of {known}")
    if method not in ("auto", "cached", "records"):
        raise DataError(f"pfi: unknown method {method!r}")
    cached_api = all(
        hasattr(model, a) for a in ("text_embeddings", "proba_from_embeddings", "features_")
    )
    if method == "cached" and not cached_api:
        raise DataError("pfi: model does not expose the cached-embedding API")
    use_cache = cached_api if method == "auto" else method == "cached"

    perms = _permutations(len(records), features, k, seed)

    if use_cache:
        embs = model.text_embeddings(records)
        phys = model.features_.transform(records)
        retained = list(model.features_.features_)
        base_scores = model.proba_from_embeddings(embs, phys)[:, 1]

        def scores_for(feature: str, perm: np.ndarray) -> np.ndarray:
            if feature == TEXT_FEATURE:
                return model.proba_from_embeddings(embs[perm], phys)[:, 1]
            if feature not in retained:
                # the model never sees this field; shuffling it cannot move scores
                return base_scores
            col = retained.index(feature)
            shuffled = phys.copy()
            shuffled[:, col] = phys[perm, col]
            return model.proba_from_embeddings(embs, shuffled)[:, 1]

    else:
        base_scores = model.predict_proba(records)[:, 1]

        def scores_for(feature: str, perm: np.ndarray) -> np.ndarray:
            return _scores_generic(model, records, feature, perm)

    baseline = auroc(base_scores, y)
    report = PfiReport(baseline=baseline, k=k, seed=seed)
    for f in features:
        runs = [auroc(scores_for(f, perm), y) for perm in perms[f]]
        report.results.append(
            FeatureImportance(
                feature=f,
                importance=baseline - float(np.mean(runs)),
                permuted_aurocs=runs,
            )
        )
    report.validate()
    return report


# ---------------------------------------------------------------- LIME


@dataclass
class TokenExplanation:
    token: str
    start: int
    end: int
    weight: float

    def to_dict(self) -> dict:
        return {"token": self.token, "start": self.start, "end": self.end, "weight": self.weight}


@dataclass
class LimeReport:
    text: str
    tokens: list[TokenExplanation]
    intercept: float
    r2: float
    prediction: float
    n_samples: int
    kernel_width: float
    seed: int

    def ranked(self) -> list[TokenExplanation]:
        return sorted(self.tokens, key=lambda t: (-t.weight, t.start))

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "tokens": [t.to_dict() for t in self.tokens],
            "intercept": self.intercept,
            "r2": self.r2,
            "prediction": self.prediction,
            "n_samples": self.n_samples,
            "kernel_width": self.kernel_width,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)

    def to_html(self) -> str:
        """Original text with tokens tinted by signed weight."""
        peak = max((abs(t.weight) for t in self.tokens), default=0.0)
        parts = ['<div class="token-weights" style="font-family: sans-serif; line-height: 1.8">']
        pos = 0
        for t in self.tokens:
            parts.append(html.escape(self.text[pos : t.start]))
            strength = 0.0 if peak == 0 else 0.85 * abs(t.weight) / peak
            color = "214, 69, 69" if t.weight >= 0 else "64, 108, 214"
            parts.append(
                f'<span style="background: rgba({color}, {strength:.3f})" '
                f'title="{t.weight:+.4f}">{html.escape(self.text[t.start : t.end])}</span>'
            )
            pos = t.end
        parts.append(html.escape(self.text[pos:]))
        parts.append(
            f'<div style="margin-top: 0.5em; font-size: 0.85em; color: #555">'
            f"model p = {self.prediction:.3f}, surrogate intercept = {self.intercept:.3f}, "
            f"fit R&#178; = {self.r2:.3f}</div></div>"
        )
        return "".join(parts)


def _weighted_ridge(masks: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float):
    """Weighted ridge with an unpenalized intercept; returns (intercept, coefs, r2)."""
    n, t = masks.shape
    x = np.hstack([np.ones((n, 1)), masks.astype(np.float64)])
    wx = w[:, None] * x
    a = x.T @ wx
    a[np.arange(1, t + 1), np.arange(1, t + 1)] += lam
    beta = np.linalg.solve(a, x.T @ (w * y))
    pred = x @ beta
    ybar = float(np.sum(w * y) / np.sum(w))
    ss_res = float(np.sum(w * (y - pred) ** 2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    if ss_tot <= 1e-18:
        r2 = 1.0 if ss_res <= 1e-18 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(beta[0]), beta[1:], r2


def lime_text_fn(
    predict_fn,
    text: str,
    n_samples: int = 1000,
    kernel_width: float = 0.75,
    seed: int = 0,
    ridge_lambda: float = 1e-3,
) -> LimeReport:
    """Fit a locally weighted linear surrogate over token-keep masks.

    predict_fn maps a list of texts to positive-class probabilities. Masked
    texts are rebuilt by joining the kept token slices with single spaces.
    """
    if n_samples < 50:
        raise DataError(f"lime: need at least 50 samples, got {n_samples}")
    if kernel_width <= 0:
        raise DataError(f"lime: kernel_width must be positive, got {kernel_width}")
    seq = tokenize(text)
    toks = seq.tokens[1:]
    offs = seq.offsets[1:]
    t = len(toks)
    if t < 2:
        raise DataError(f"lime: need at least 2 tokens, text has {t}")

    rng = derived_rng(seed, "lime")
    masks = np.ones((n_samples, t), dtype=np.int64)
    masks[1:] = (rng.random((n_samples - 1, t)) < 0.5).astype(np.int64)

    texts = [
        " ".join(text[s:e] for keep, (s, e) in zip(row, offs) if keep) for row in masks
    ]
    try:
        preds = np.asarray(predict_fn(texts), dtype=np.float64)
    except Exception as exc:
        raise DataError(f"lime: model failed on the perturbation batch: {exc}") from exc
    if preds.shape != (n_samples,):
        raise DataError(f"lime: model returned shape {preds.shape}, expected ({n_samples},)")
    if not np.all(np.isfinite(preds)):
        bad = int(np.flatnonzero(~np.isfinite(preds))[0])
        raise DataError(f"lime: non-finite model output on perturbation {bad}: {texts[bad]!r}")

    kept = masks.sum(axis=1)
    dist = 1.0 - np.sqrt(kept / t)  # cosine distance to the all-ones mask
    weights = np.exp(-(dist**2) / kernel_width**2)
    intercept, coefs, r2 = _weighted_ridge(masks, preds, weights, ridge_lambda)

    tokens = [
        TokenExplanation(token=tok, start=s, end=e, weight=float(cw))
        for tok, (s, e), cw in zip(toks, offs, coefs)
    ]
    return LimeReport(
        text=text,
        tokens=tokens,
        intercept=intercept,
        r2=r2,
        prediction=float(preds[0]),
        n_samples=n_samples,
        kernel_width=kernel_width,
        seed=seed,
    )


def lime_text(
    model,
    record: DailyRecord,
    n_samples: int = 1000,
    kernel_width: float = 0.75,
    seed: int = 0,
    ridge_lambda: float = 1e-3,
) -> LimeReport:
    """Explain one record's prediction token by token.

    Perturbed texts ride on copies of the record so the physiological
    inputs stay fixed; a fully masked text becomes a lone period, which
    tokenizes to no content tokens.
    """
    if record.text is None or not record.text.strip():
        raise DataError(f"lime: record {record.subject_id}/{record.day_index} has no text")

    def predict_fn(texts: list[str]) -> np.ndarray:
        batch = []
        for t in texts:
            c = record.copy()
            c.text = t if t.strip() else "."
            batch.append(c)
        return model.predict_proba(batch)[:, 1]

    return lime_text_fn(
        predict_fn,
        record.text,
        n_samples=n_samples,
        kernel_width=kernel_width,
        seed=seed,
        ridge_lambda=ridge_lambda,
    )
