import numpy as np
import pytest

from metsfuse.errors import DataError
from metsfuse.metrics import ConfusionCounts, auroc, auroc_trapezoid, confusion, metrics


def enumerate_confusion(scores, labels, threshold=0.5):
    """Loop-and-count reference, no vectorization shortcuts."""
    tp = tn = fp = fn = 0
    for s, y in zip(scores, labels):
        pred = s >= threshold
        if pred and y:
            tp += 1
        elif pred and not y:
            fp += 1
        elif not pred and y:
            fn += 1
        else:
            tn += 1
    return tp, tn, fp, fn


class TestConfusion:
    def test_random_instances_match_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            scores = rng.random(n)
            labels = rng.integers(0, 2, size=n)
            c = confusion(scores, labels)
            assert (c.tp, c.tn, c.fp, c.fn) == enumerate_confusion(scores, labels)

    def test_score_at_threshold_counts_positive(self):
        c = confusion([0.5], [1])
        assert c.tp == 1 and c.fn == 0

    def test_out_of_range_scores_rejected(self):
        with pytest.raises(DataError, match="0, 1"):
            confusion([1.2], [1])
        with pytest.raises(DataError):
            confusion([0.2, 0.4], [1])


class TestMetrics:
    def test_formulae_on_known_counts(self):
        m = metrics(ConfusionCounts(tp=6, tn=8, fp=2, fn=4))
        assert m.acc == pytest.approx(14 / 20)
        assert m.pre == pytest.approx(6 / 8)
        assert m.rec == pytest.approx(6 / 10)
        assert m.f1 == pytest.approx(2 * (6 / 8) * (6 / 10) / ((6 / 8) + (6 / 10)))
        assert not m.degenerate_precision and not m.degenerate_recall

    def test_no_predicted_positives_flags_precision(self):
        m = metrics(ConfusionCounts(tp=0, tn=5, fp=0, fn=3))
        assert m.pre == 0.0 and m.f1 == 0.0
        assert m.degenerate_precision and not m.degenerate_recall

    def test_no_actual_positives_flags_recall(self):
        m = metrics(ConfusionCounts(tp=0, tn=5, fp=2, fn=0))
        assert m.rec == 0.0
        assert m.degenerate_recall

    def test_perfect_classifier(self):
        m = metrics(ConfusionCounts(tp=10, tn=10, fp=0, fn=0))
        assert (m.acc, m.pre, m.rec, m.f1) == (1.0, 1.0, 1.0, 1.0)


class TestAuroc:
    def test_worked_example(self):
        assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)

    def test_rank_form_equals_trapezoid_form(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(4, 60))
            scores = np.round(rng.random(n), 2)  # rounding forces ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auroc(scores, labels) == pytest.approx(
                auroc_trapezoid(scores, labels), abs=1e-12
            )

    def test_ties_credit_half(self):
        assert auroc([0.5, 0.5], [0, 1]) == pytest.approx(0.5)
        assert auroc([0.3, 0.3, 0.3, 0.3], [0, 1, 0, 1]) == pytest.approx(0.5)

    def test_perfect_and_inverted_ranking(self):
        assert auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auroc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_score_scale_invariance(self):
        # only the ordering matters
        scores = np.array([0.11, 0.52, 0.46, 0.97, 0.03])
        labels = np.array([0, 1, 0, 1, 0])
        assert auroc(scores, labels) == pytest.approx(auroc(scores**3, labels))

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="both classes"):
            auroc([0.1, 0.9], [1, 1])
        with pytest.raises(DataError, match="both classes"):
            auroc_trapezoid([0.1, 0.9], [0, 0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            auroc([0.1, 0.2], [1])
