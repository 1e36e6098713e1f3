import numpy as np
import pytest

from synthvision.manifest import ClassLabel
from synthvision.metrics import (
    ClassReport, ConfusionMatrix, RocCurve, average_precision, classification_report,
    confusion_matrix, render_report, roc_curve,
)
from synthvision.vit import PredictionEntry, PredictionSet

from oracles import brute_auc, brute_average_precision, brute_confusion, brute_report


def make_preds(truth, scores, predicted=None):
    if predicted is None:
        predicted = [1 if s >= 0.5 else 0 for s in scores]
    entries = [
        PredictionEntry(
            id=f"img-{i}", score=float(s),
            predicted_label=ClassLabel.POSITIVE if p else ClassLabel.NEGATIVE,
            true_label=ClassLabel.POSITIVE if t else ClassLabel.NEGATIVE,
        )
        for i, (t, s, p) in enumerate(zip(truth, scores, predicted))
    ]
    return PredictionSet(entries=entries)


def reference_confusion() -> ConfusionMatrix:
    return ConfusionMatrix(tp=66, fn=4, fp=0, tn=70)


class TestConfusionMatrix:
    def test_reference_counts(self):
        truth = [1] * 70 + [0] * 70
        predicted = [1] * 66 + [0] * 4 + [0] * 70
        preds = make_preds(truth, [0.9] * 140, predicted)
        cm = confusion_matrix(preds)
        assert (cm.tp, cm.fn, cm.fp, cm.tn) == (66, 4, 0, 70)

    def test_all_correct(self):
        preds = make_preds([1] * 5 + [0] * 5, [0.9] * 5 + [0.1] * 5)
        cm = confusion_matrix(preds)
        assert (cm.tp, cm.fn, cm.fp, cm.tn) == (5, 0, 0, 5)

    def test_all_flipped(self):
        preds = make_preds([1] * 5 + [0] * 5, [0.1] * 5 + [0.9] * 5)
        cm = confusion_matrix(preds)
        assert (cm.tp, cm.fn, cm.fp, cm.tn) == (0, 5, 5, 0)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            confusion_matrix(PredictionSet())


class TestClassificationReport:
    def test_reference_report_two_decimals(self):
        report = classification_report(reference_confusion())
        rounded = {
            "precision": (round(report.positive.precision, 2), round(report.negative.precision, 2)),
            "recall": (round(report.positive.recall, 2), round(report.negative.recall, 2)),
            "f1": (round(report.positive.f1, 2), round(report.negative.f1, 2)),
            "accuracy": round(report.accuracy, 2),
            "macro": tuple(round(v, 2) for v in report.macro_avg),
            "weighted": tuple(round(v, 2) for v in report.weighted_avg),
        }
        assert rounded == {
            "precision": (1.00, 0.95),
            "recall": (0.94, 1.00),
            "f1": (0.97, 0.97),
            "accuracy": 0.97,
            "macro": (0.97, 0.97, 0.97),
            "weighted": (0.97, 0.97, 0.97),
        }
        assert (report.positive.support, report.negative.support) == (70, 70)

    def test_perfect_classifier(self):
        report = classification_report(ConfusionMatrix(5, 0, 0, 5))
        assert report.positive == report.negative
        assert report.accuracy == 1.0
        assert report.macro_avg == (1.0, 1.0, 1.0)
        assert not report.zero_division_flags

    def test_zero_support_convention(self):
        # no true positives at all: tp=0, fn=0, fp=3, tn=3
        report = classification_report(ConfusionMatrix(0, 0, 3, 3))
        assert report.positive.precision == 0.0
        assert report.positive.recall == 0.0
        assert report.accuracy == 0.5
        assert report.zero_division_flags  # flagged, not raised

    def test_equal_supports_weighted_equals_macro(self):
        report = classification_report(ConfusionMatrix(40, 10, 20, 30))
        assert report.weighted_avg == pytest.approx(report.macro_avg, abs=1e-15)


class TestRocCurve:
    def test_perfectly_separated(self):
        preds = make_preds([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1])
        assert roc_curve(preds).auc == pytest.approx(1.0, abs=1e-12)

    def test_all_ties(self):
        preds = make_preds([1, 1, 0, 0], [0.5, 0.5, 0.5, 0.5])
        assert roc_curve(preds).auc == pytest.approx(0.5, abs=1e-12)

    def test_hand_computed_case(self):
        # pos {0.8, 0.4}, neg {0.6, 0.2}: 3 of 4 pairs concordant
        preds = make_preds([1, 1, 0, 0], [0.8, 0.4, 0.6, 0.2])
        assert roc_curve(preds).auc == pytest.approx(0.75, abs=1e-12)

    def test_single_class_errors(self):
        with pytest.raises(ValueError):
            roc_curve(make_preds([1, 1], [0.5, 0.6]))

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = rng.integers(2, 30)
            truth = rng.integers(0, 2, n)
            if truth.sum() in (0, n):
                continue
            scores = np.round(rng.random(n), 2)
            roc = roc_curve(make_preds(truth, scores))
            assert roc.points[0] == (0.0, 0.0)
            assert roc.points[-1] == (1.0, 1.0)


class TestAveragePrecision:
    def test_perfectly_separated(self):
        assert average_precision(make_preds([1, 0], [0.9, 0.1])) == pytest.approx(1.0)

    def test_single_positive_ranked_last(self):
        preds = make_preds([0, 0, 0, 1], [0.9, 0.8, 0.7, 0.1])
        assert average_precision(preds) == pytest.approx(0.25, abs=1e-12)

    def test_all_ties_equals_prevalence(self):
        preds = make_preds([1, 1, 1, 0, 0], [0.4] * 5)
        assert average_precision(preds) == pytest.approx(3 / 5, abs=1e-12)

    def test_no_positives_errors(self):
        with pytest.raises(ValueError):
            average_precision(make_preds([0, 0], [0.4, 0.2]))


def test_oracle_equivalence_random_sets():
    rng = np.random.default_rng(1234)
    checked = 0
    while checked < 300:
        n = int(rng.integers(1, 21))
        truth = rng.integers(0, 2, n).tolist()
        scores = np.round(rng.random(n), rng.integers(1, 4)).tolist()
        predicted = [1 if s >= 0.5 else 0 for s in scores]
        preds = make_preds(truth, scores, predicted)

        cm = confusion_matrix(preds)
        assert (cm.tp, cm.fn, cm.fp, cm.tn) == brute_confusion(truth, predicted)
        report = classification_report(cm)
        ref = brute_report(truth, predicted)
        assert (report.positive.precision, report.negative.precision) == pytest.approx(ref["precision"], abs=1e-9)
        assert (report.positive.recall, report.negative.recall) == pytest.approx(ref["recall"], abs=1e-9)
        assert (report.positive.f1, report.negative.f1) == pytest.approx(ref["f1"], abs=1e-9)
        assert report.accuracy == pytest.approx(ref["accuracy"], abs=1e-9)
        assert report.macro_avg == pytest.approx(ref["macro"], abs=1e-9)
        assert report.weighted_avg == pytest.approx(ref["weighted"], abs=1e-9)

        if 0 < sum(truth) < n:
            assert roc_curve(preds).auc == pytest.approx(brute_auc(truth, scores), abs=1e-9)
        if sum(truth) > 0:
            assert average_precision(preds) == pytest.approx(
                brute_average_precision(truth, scores), abs=1e-9)
        checked += 1


def test_report_invariant_under_permutation():
    rng = np.random.default_rng(7)
    truth = rng.integers(0, 2, 15).tolist()
    scores = rng.random(15).tolist()
    preds = make_preds(truth, scores)
    base = classification_report(confusion_matrix(preds))
    for _ in range(5):
        order = rng.permutation(15)
        shuffled = PredictionSet(entries=[preds.entries[i] for i in order])
        report = classification_report(confusion_matrix(shuffled))
        assert report.to_dict() == base.to_dict()


class TestRenderReport:
    def test_reference_csv_rows(self, tmp_path):
        cm = reference_confusion()
        report = classification_report(cm)
        preds = make_preds([1] * 70 + [0] * 70,
                           list(np.linspace(0.99, 0.6, 70)) + list(np.linspace(0.4, 0.01, 70)))
        roc = roc_curve(preds)
        ap = average_precision(preds)
        paths = render_report(cm, report, roc, ap, tmp_path, ("HPV", "Normal"))
        rows = paths["report_csv"].read_text().strip().splitlines()
        assert rows[0] == ",precision,recall,f1-score,support"
        assert rows[1] == "HPV,1.00,0.94,0.97,70"
        assert rows[2] == "Normal,0.95,1.00,0.97,70"
        assert rows[3] == "accuracy,,,0.97,140"
        assert rows[4] == "macro avg,0.97,0.97,0.97,140"
        assert rows[5] == "weighted avg,0.97,0.97,0.97,140"

    def test_rerun_is_byte_identical(self, tmp_path):
        preds = make_preds([1, 1, 0, 0], [0.8, 0.4, 0.6, 0.2])
        cm = confusion_matrix(preds)
        args = (cm, classification_report(cm), roc_curve(preds), average_precision(preds))
        first = render_report(*args, tmp_path)
        contents = {k: p.read_bytes() for k, p in first.items()}
        second = render_report(*args, tmp_path)
        assert {k: p.read_bytes() for k, p in second.items()} == contents

    def test_derived_values_in_json(self, tmp_path):
        import json

        cm = reference_confusion()
        report = classification_report(cm)
        preds = make_preds([1, 0], [0.9, 0.1])
        paths = render_report(cm, report, roc_curve(preds), 1.0, tmp_path)
        payload = json.loads(paths["report_json"].read_text())
        assert payload["derived"]["specificity"] == pytest.approx(1.0)
        assert payload["derived"]["npv"] == pytest.approx(70 / 74)

    def test_creates_missing_output_dir(self, tmp_path):
        preds = make_preds([1, 0], [0.9, 0.1])
        cm = confusion_matrix(preds)
        out = tmp_path / "nested" / "dir"
        render_report(cm, classification_report(cm), roc_curve(preds), 1.0, out)
        assert (out / "report.json").is_file()


def test_roc_curve_type_validates():
    with pytest.raises(ValueError):
        RocCurve(points=[(0.0, 0.0), (0.5, 0.4), (1.0, 1.0)], auc=1.5)
    with pytest.raises(ValueError):
        RocCurve(points=[(0.1, 0.0), (1.0, 1.0)], auc=0.5)
