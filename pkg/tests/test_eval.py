import csv
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from jitdp.errors import EmptyMatrix, LengthMismatch, NoPositives
from jitdp.evaluation import (
    ConfusionMatrix,
    EvalReport,
    confusion,
    evaluate,
    metrics,
    pr_auc,
    pr_curve,
    write_report,
)


# Independent oracles, deliberately written from the definitions rather
# than mirroring the implementation.

def oracle_metrics(tp, fp, fn, tn):
    total = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return (tp + tn) / total, precision, recall, f1


def oracle_pr_auc(scores, labels):
    positives = sum(labels)
    area = 0.0
    prev_recall = 0.0
    for threshold in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= threshold and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= threshold and y == 0)
        recall = tp / positives
        precision = tp / (tp + fp) if tp + fp else 0.0
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def test_confusion_counts_by_cell():
    cm = confusion([1, 1, 0], [1, 1, 0])
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (2, 0, 0, 1)


def test_confusion_inverted_predictions():
    labels = [1, 0, 1, 0]
    cm = confusion([1 - y for y in labels], labels)
    assert cm.tp == 0 and cm.tn == 0
    assert cm.fp == 2 and cm.fn == 2


def test_confusion_rejects_length_mismatch():
    with pytest.raises(LengthMismatch):
        confusion([1, 0], [1])
    with pytest.raises(LengthMismatch):
        confusion([], [])


def test_prediction_flip_permutes_cells():
    # over every pair of length-4 vectors: flipping predictions must send
    # tp->fn, fp->tn, fn->tp, tn->fp
    vectors = [[(n >> k) & 1 for k in range(4)] for n in range(16)]
    for preds in vectors:
        for labels in vectors:
            cm = confusion(preds, labels)
            flipped = confusion([1 - p for p in preds], labels)
            assert flipped.tp == cm.fn
            assert flipped.fp == cm.tn
            assert flipped.fn == cm.tp
            assert flipped.tn == cm.fp


def test_metrics_hand_arithmetic():
    accuracy, precision, recall, f1 = metrics(ConfusionMatrix(tp=2, fp=1, fn=2, tn=5))
    assert precision == 2 / 3
    assert recall == 1 / 2
    assert f1 == pytest.approx(4 / 7, abs=1e-15)
    assert accuracy == 7 / 10


def test_metrics_zero_over_zero_convention():
    accuracy, precision, recall, f1 = metrics(ConfusionMatrix(tp=0, fp=0, fn=0, tn=3))
    assert precision == 0.0 and recall == 0.0 and f1 == 0.0
    assert accuracy == 1.0


def test_metrics_harmonic_mean_of_equal_halves():
    _, precision, recall, f1 = metrics(ConfusionMatrix(tp=1, fp=1, fn=1, tn=0))
    assert precision == 0.5 and recall == 0.5 and f1 == 0.5


def test_metrics_rejects_empty_matrix():
    with pytest.raises(EmptyMatrix):
        metrics(ConfusionMatrix(0, 0, 0, 0))


@given(
    st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60)
)
def test_metrics_stay_in_unit_interval(pairs):
    preds = [p for p, _ in pairs]
    labels = [y for _, y in pairs]
    values = metrics(confusion(preds, labels))
    assert all(0.0 <= v <= 1.0 for v in values)
    accuracy = values[0]
    assert (accuracy == 1.0) == (preds == labels)


@given(
    st.integers(0, 20), st.integers(0, 20), st.integers(0, 20), st.integers(1, 20)
)
def test_f1_bounded_by_precision_and_recall(tp, fp, fn, tn):
    _, precision, recall, f1 = metrics(ConfusionMatrix(tp, fp, fn, tn))
    if precision > 0 and recall > 0:
        # the harmonic mean sits between its arguments, up to one ulp of
        # rounding (e.g. P = R = 0.2 evaluates a hair above 0.2)
        assert f1 >= min(precision, recall) - 1e-12
        assert f1 <= max(precision, recall) + 1e-12


def test_pr_auc_perfect_ranking():
    scores = [0.9, 0.8, 0.7, 0.2, 0.1]
    labels = [1, 1, 1, 0, 0]
    assert pr_auc(scores, labels) == 1.0


def test_pr_auc_constant_scores_equal_prevalence():
    labels = [1, 0, 0, 1, 0, 0, 0, 0]
    assert pr_auc([0.5] * 8, labels) == pytest.approx(2 / 8, abs=1e-15)


def test_pr_auc_requires_a_positive():
    with pytest.raises(NoPositives):
        pr_auc([0.1, 0.9], [0, 0])


def test_pr_auc_matches_oracle_on_ties():
    scores = [0.4, 0.4, 0.9, 0.1, 0.9, 0.4]
    labels = [1, 0, 1, 0, 0, 1]
    assert pr_auc(scores, labels) == pytest.approx(
        oracle_pr_auc(scores, labels), abs=1e-12
    )


@given(
    st.lists(
        st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=1, max_size=12
    ).filter(lambda pairs: any(y for _, y in pairs))
)
def test_pr_auc_invariant_under_monotone_transform(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    transformed = [math.exp(0.5 * s) + 3.0 for s in scores]
    assert pr_auc(scores, labels) == pytest.approx(
        pr_auc(transformed, labels), abs=1e-12
    )


def test_pr_curve_recall_is_sorted_and_final():
    points = pr_curve([0.9, 0.5, 0.5, 0.1], [1, 0, 1, 0])
    recalls = [p.recall for p in points]
    assert recalls == sorted(recalls)
    assert recalls[-1] == 1.0


def test_report_files_round_trip(tmp_path):
    rep = evaluate([0.9, 0.6, 0.3, 0.2], [1, 1, 0, 0])
    json_path = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    write_report(rep, str(json_path), str(csv_path), extra={"split": "test"})

    parsed = json.loads(json_path.read_text())
    assert parsed["f1"] == rep.f1
    assert parsed["pr_auc"] == rep.pr_auc
    assert parsed["confusion"]["tp"] == rep.confusion.tp
    assert parsed["split"] == "test"

    with open(csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["threshold", "recall", "precision"]
    assert len(rows) == len(rep.pr_points) + 1

    # identical input must give identical bytes
    write_report(rep, str(tmp_path / "again.json"), str(tmp_path / "again.csv"))
    assert (tmp_path / "again.csv").read_bytes() == csv_path.read_bytes()


def test_report_with_no_points_writes_header_only_csv(tmp_path):
    rep = EvalReport(
        confusion=ConfusionMatrix(0, 0, 0, 1),
        accuracy=1.0,
        precision=0.0,
        recall=0.0,
        f1=0.0,
        pr_auc=0.0,
        pr_points=(),
    )
    write_report(rep, str(tmp_path / "r.json"), str(tmp_path / "r.csv"))
    assert (tmp_path / "r.csv").read_bytes() == b"threshold,recall,precision\r\n"
