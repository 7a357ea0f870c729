"""Classification metrics and report files.

Precision, recall, F1, and accuracy use the 0/0 -> 0 convention. PR-AUC
is the step-wise average-precision sum over distinct score thresholds,
with tied scores grouped into a single threshold.
"""

import csv
from dataclasses import dataclass

from .errors import EmptyMatrix, LengthMismatch, NoPositives
from .storage import write_json


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    recall: float
    precision: float


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    pr_auc: float
    pr_points: tuple  # PrPoints sorted by recall ascending


def confusion(preds, labels):
    """Count the four cells; positive class is the defective label 1."""
    if len(preds) != len(labels):
        raise LengthMismatch(
            "%d predictions vs %d labels" % (len(preds), len(labels))
        )
    if not preds:
        raise LengthMismatch("need at least one instance")
    tp = fp = fn = tn = 0
    for p, y in zip(preds, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1 and y == 0:
            fp += 1
        elif p == 0 and y == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def _ratio(num, den):
    return num / den if den > 0 else 0.0


def metrics(cm):
    """(accuracy, precision, recall, f1) with 0/0 -> 0."""
    if cm.total <= 0:
        raise EmptyMatrix("confusion matrix has no instances")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    accuracy = (cm.tp + cm.tn) / cm.total
    return accuracy, precision, recall, f1


def f1_score(preds, labels):
    return metrics(confusion(preds, labels))[3]


def pr_curve(scores, labels):
    """PrPoints at every distinct threshold, recall ascending.

    The threshold sweep runs from the highest score down, so recall grows
    monotonically; points come out already sorted.
    """
    if len(scores) != len(labels):
        raise LengthMismatch(
            "%d scores vs %d labels" % (len(scores), len(labels))
        )
    positives = sum(1 for y in labels if y == 1)
    if positives == 0:
        raise NoPositives("PR curve needs at least one positive label")
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    points = []
    tp = fp = 0
    i = 0
    while i < len(order):
        threshold = scores[order[i]]
        while i < len(order) and scores[order[i]] == threshold:
            if labels[order[i]] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(
            PrPoint(
                threshold=float(threshold),
                recall=tp / positives,
                precision=_ratio(tp, tp + fp),
            )
        )
    return tuple(points)


def pr_auc(scores, labels):
    """Step-wise area: sum of (R_i - R_{i-1}) * P_i over thresholds."""
    area = 0.0
    prev_recall = 0.0
    for point in pr_curve(scores, labels):
        area += (point.recall - prev_recall) * point.precision
        prev_recall = point.recall
    return area


def evaluate(scores, labels, threshold=0.5):
    """Full EvalReport from probability scores and binary labels."""
    preds = [1 if s >= threshold else 0 for s in scores]
    cm = confusion(preds, labels)
    accuracy, precision, recall, f1 = metrics(cm)
    return EvalReport(
        confusion=cm,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        pr_auc=pr_auc(scores, labels),
        pr_points=pr_curve(scores, labels),
    )


def report_to_dict(report):
    return {
        "confusion": {
            "tp": report.confusion.tp,
            "fp": report.confusion.fp,
            "fn": report.confusion.fn,
            "tn": report.confusion.tn,
        },
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "pr_auc": report.pr_auc,
        "pr_points": [
            {"threshold": p.threshold, "recall": p.recall, "precision": p.precision}
            for p in report.pr_points
        ],
    }


def write_report(report, json_path, csv_path, extra=None):
    """JSON report plus the PR-curve CSV; bytes are run-to-run stable."""
    payload = report_to_dict(report)
    if extra:
        payload.update(extra)
    write_json(json_path, payload)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "recall", "precision"])
        for point in report.pr_points:
            writer.writerow([repr(point.threshold), repr(point.recall),
                             repr(point.precision)])
