"""Evaluation artifacts computed from a prediction set.

Confusion matrix, per-class precision/recall/F1/support with macro and
weighted averages, the ROC step curve with trapezoidal AUC, and average
precision. Ties in the score sweep are grouped at a single threshold step,
which makes trapezoidal AUC equal pairwise concordance with half credit
for ties. Undefined rate cells (zero denominators) report 0 and raise a
warning flag rather than erroring.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vit import PredictionSet


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise ValueError("confusion matrix counts must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def positive_support(self) -> int:
        return self.tp + self.fn

    @property
    def negative_support(self) -> int:
        return self.fp + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn}


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassReport:
    positive: ClassMetrics
    negative: ClassMetrics
    accuracy: float
    macro_avg: tuple[float, float, float]
    weighted_avg: tuple[float, float, float]
    zero_division_flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "positive": vars(self.positive),
            "negative": vars(self.negative),
            "accuracy": self.accuracy,
            "macro_avg": list(self.macro_avg),
            "weighted_avg": list(self.weighted_avg),
            "zero_division_flags": self.zero_division_flags,
        }


@dataclass
class RocCurve:
    points: list[tuple[float, float]]  # (false_positive_rate, true_positive_rate)
    auc: float

    def __post_init__(self):
        if not self.points:
            raise ValueError("ROC curve needs at least one point")
        if self.points[0] != (0.0, 0.0) or self.points[-1] != (1.0, 1.0):
            raise ValueError("ROC curve must run from (0,0) to (1,1)")
        fprs = [p[0] for p in self.points]
        tprs = [p[1] for p in self.points]
        if np.any(np.diff(fprs) < 0) or np.any(np.diff(tprs) < 0):
            raise ValueError("ROC coordinates must be non-decreasing")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError("AUC must lie in [0, 1]")


def confusion_matrix(preds: PredictionSet) -> ConfusionMatrix:
    """Exact counts comparing predicted to true labels (positive = disease role)."""
    if len(preds) == 0:
        raise ValueError("prediction set is empty")
    truth = preds.truth()
    predicted = preds.predicted()
    return ConfusionMatrix(
        tp=int(((truth == 1) & (predicted == 1)).sum()),
        fn=int(((truth == 1) & (predicted == 0)).sum()),
        fp=int(((truth == 0) & (predicted == 1)).sum()),
        tn=int(((truth == 0) & (predicted == 0)).sum()),
    )


def _rate(numerator: int, denominator: int, flag: str, flags: list[str]) -> float:
    if denominator == 0:
        flags.append(flag)
        return 0.0
    return numerator / denominator


def classification_report(cm: ConfusionMatrix) -> ClassReport:
    """Per-class precision/recall/F1/support plus accuracy and averages."""
    flags: list[str] = []
    p_pos = _rate(cm.tp, cm.tp + cm.fp, "positive precision undefined", flags)
    r_pos = _rate(cm.tp, cm.tp + cm.fn, "positive recall undefined", flags)
    p_neg = _rate(cm.tn, cm.tn + cm.fn, "negative precision undefined", flags)
    r_neg = _rate(cm.tn, cm.tn + cm.fp, "negative recall undefined", flags)

    def f1(p, r):
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    f_pos, f_neg = f1(p_pos, r_pos), f1(p_neg, r_neg)
    support_pos, support_neg = cm.positive_support, cm.negative_support
    total = cm.total
    accuracy = (cm.tp + cm.tn) / total
    macro = tuple((a + b) / 2 for a, b in ((p_pos, p_neg), (r_pos, r_neg), (f_pos, f_neg)))
    weighted = tuple(
        (a * support_pos + b * support_neg) / total
        for a, b in ((p_pos, p_neg), (r_pos, r_neg), (f_pos, f_neg))
    )
    return ClassReport(
        positive=ClassMetrics(p_pos, r_pos, f_pos, support_pos),
        negative=ClassMetrics(p_neg, r_neg, f_neg, support_neg),
        accuracy=accuracy,
        macro_avg=macro,
        weighted_avg=weighted,
        zero_division_flags=flags,
    )


def _sweep(preds: PredictionSet):
    """Cumulative (tp, fp) after each distinct descending score threshold."""
    scores = preds.scores()
    truth = preds.truth()
    order = np.argsort(-scores, kind="stable")
    scores, truth = scores[order], truth[order]
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    steps = []
    tp = fp = 0
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and scores[j] == scores[i]:
            j += 1
        tp += int(truth[i:j].sum())
        fp += (j - i) - int(truth[i:j].sum())
        steps.append((scores[i], tp, fp))
        i = j
    return steps, n_pos, n_neg


def roc_curve(preds: PredictionSet) -> RocCurve:
    """Threshold sweep over distinct scores, trapezoidal AUC.

    The trapezoid over grouped ties equals pairwise concordance with half
    credit for tied pairs.
    """
    steps, n_pos, n_neg = _sweep(preds)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative")
    points = [(0.0, 0.0)]
    for _, tp, fp in steps:
        points.append((fp / n_neg, tp / n_pos))
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2
    return RocCurve(points=points, auc=float(auc))


def average_precision(preds: PredictionSet) -> float:
    """AP = sum over the descending sweep of (recall step) * precision."""
    steps, n_pos, _ = _sweep(preds)
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    ap = 0.0
    prev_recall = 0.0
    for _, tp, fp in steps:
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


def render_report(
    cm: ConfusionMatrix,
    report: ClassReport,
    roc: RocCurve,
    ap: float,
    output_dir: str | Path,
    class_names: tuple[str, str] = ("positive", "negative"),
) -> dict[str, Path]:
    """Write report.json (full precision), report.csv (2-decimal table),
    and roc_points.csv. Reruns on the same inputs are byte-identical."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    pos_name, neg_name = class_names

    json_path = output_dir / "report.json"
    payload = {
        "class_names": {"positive": pos_name, "negative": neg_name},
        "confusion_matrix": cm.to_dict(),
        "classification_report": report.to_dict(),
        "roc_auc": roc.auc,
        "average_precision": ap,
        "derived": {
            "specificity": report.negative.recall,
            "npv": report.negative.precision,
        },
    }
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")

    csv_path = output_dir / "report.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["", "precision", "recall", "f1-score", "support"])
        writer.writerow([pos_name, f"{report.positive.precision:.2f}",
                         f"{report.positive.recall:.2f}", f"{report.positive.f1:.2f}",
                         report.positive.support])
        writer.writerow([neg_name, f"{report.negative.precision:.2f}",
                         f"{report.negative.recall:.2f}", f"{report.negative.f1:.2f}",
                         report.negative.support])
        writer.writerow(["accuracy", "", "", f"{report.accuracy:.2f}", cm.total])
        writer.writerow(["macro avg", *(f"{v:.2f}" for v in report.macro_avg), cm.total])
        writer.writerow(["weighted avg", *(f"{v:.2f}" for v in report.weighted_avg), cm.total])

    roc_path = output_dir / "roc_points.csv"
    with roc_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["false_positive_rate", "true_positive_rate"])
        for fpr, tpr in roc.points:
            writer.writerow([f"{fpr:.10f}", f"{tpr:.10f}"])

    return {"report_json": json_path, "report_csv": csv_path, "roc_points_csv": roc_path}


def evaluate_predictions(preds: PredictionSet, output_dir: str | Path | None = None,
                         class_names: tuple[str, str] = ("positive", "negative")):
    """Convenience wrapper: all metrics from one prediction set, optionally rendered."""
    cm = confusion_matrix(preds)
    report = classification_report(cm)
    roc = roc_curve(preds)
    ap = average_precision(preds)
    paths = None
    if output_dir is not None:
        paths = render_report(cm, report, roc, ap, output_dir, class_names)
    return cm, report, roc, ap, paths
