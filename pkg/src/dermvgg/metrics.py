"""Confusion matrix, classification report, and one-vs-rest ROC/AUC."""

import csv
import json
import os
import re
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray        # [c, c] ints, rows = true class, cols = predicted
    class_names: list

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassificationReport:
    classes: list             # ClassMetrics per class
    accuracy: float
    macro_avg: dict           # {"precision": .., "recall": .., "f1": ..}
    weighted_avg: dict
    zero_division_classes: list = field(default_factory=list)


@dataclass
class RocCurve:
    class_name: str
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def confusion(true_labels, predicted_labels, num_classes, class_names=None):
    true_labels = np.asarray(true_labels)
    predicted_labels = np.asarray(predicted_labels)
    if len(true_labels) == 0:
        raise ValueError("empty label sequences")
    if len(true_labels) != len(predicted_labels):
        raise ValueError("label sequences differ in length")
    for arr, which in ((true_labels, "true"), (predicted_labels, "predicted")):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"{which} label out of range [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true_labels, predicted_labels), 1)
    if class_names is None:
        class_names = [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts=counts, class_names=list(class_names))


def report(cm):
    """Per-class precision/recall/F1 plus accuracy and macro/weighted averages.

    A class with a zero denominator gets metric 0 and is listed in
    zero_division_classes instead of producing NaN.
    """
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise ValueError("all-zero confusion matrix")
    tp = np.diag(counts).astype(np.float64)
    pred_totals = counts.sum(axis=0).astype(np.float64)
    true_totals = counts.sum(axis=1).astype(np.float64)

    flagged = []
    classes = []
    for i, name in enumerate(cm.class_names):
        if pred_totals[i] == 0 or true_totals[i] == 0:
            flagged.append(name)
        prec = tp[i] / pred_totals[i] if pred_totals[i] > 0 else 0.0
        rec = tp[i] / true_totals[i] if true_totals[i] > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if (prec + rec) > 0 else 0.0
        classes.append(ClassMetrics(name=name, precision=prec, recall=rec, f1=f1,
                                    support=int(true_totals[i])))

    def avg(weights):
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
        return {
            "precision": float(sum(c.precision * wi for c, wi in zip(classes, w))),
            "recall": float(sum(c.recall * wi for c, wi in zip(classes, w))),
            "f1": float(sum(c.f1 * wi for c, wi in zip(classes, w))),
        }

    return ClassificationReport(
        classes=classes,
        accuracy=float(tp.sum() / total),
        macro_avg=avg(np.ones(len(classes))),
        weighted_avg=avg(true_totals),
        zero_division_classes=flagged,
    )


def roc_auc(true_labels, scores, class_index, class_name=None):
    """One-vs-rest ROC for one class from per-sample probability rows.

    Thresholds sweep the distinct scores descending; tied scores form a
    single step. AUC by trapezoidal integration, which equals the
    tie-corrected pair-counting statistic.
    """
    true_labels = np.asarray(true_labels)
    scores = np.asarray(scores, dtype=np.float64)
    pos = (true_labels == class_index).astype(np.int64)
    n_pos, n_neg = int(pos.sum()), int(len(pos) - pos.sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"degenerate class {class_index}: needs both positives and negatives")
    s = scores[:, class_index]
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    pos_sorted = pos[order]

    tpr = [0.0]
    fpr = [0.0]
    tp = fp = 0
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int(pos_sorted[i:j].sum())
        fp += (j - i) - int(pos_sorted[i:j].sum())
        tpr.append(tp / n_pos)
        fpr.append(fp / n_neg)
        i = j
    fpr = np.asarray(fpr)
    tpr = np.asarray(tpr)
    trapezoid = getattr(np, "trapezoid", np.trapz)
    auc = float(trapezoid(tpr, fpr))
    if class_name is None:
        class_name = str(class_index)
    return RocCurve(class_name=class_name, fpr=fpr, tpr=tpr, auc=auc)


def report_to_dict(rep):
    return {
        "classes": [
            {"name": c.name, "precision": c.precision, "recall": c.recall,
             "f1": c.f1, "support": c.support}
            for c in rep.classes
        ],
        "accuracy": rep.accuracy,
        "macro_avg": rep.macro_avg,
        "weighted_avg": rep.weighted_avg,
        "zero_division_classes": rep.zero_division_classes,
    }


def _safe_name(name):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def emit_report(rep, cm, curves, out_dir, format):
    """Serialize the evaluation artifacts; returns the list of files written.

    format "json": report.json (full report structure). format "csv":
    report.csv, confusion.csv, and roc_<class>.csv per curve. Numbers are
    stored at full precision; rounding is a display concern.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if format == "json":
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(report_to_dict(rep), f, indent=2)
            f.write("\n")
        written.append(path)
    elif format == "csv":
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["class", "precision", "recall", "f1", "support"])
            for c in rep.classes:
                w.writerow([c.name, repr(c.precision), repr(c.recall), repr(c.f1), c.support])
            w.writerow(["accuracy", repr(rep.accuracy), "", "", cm.total])
            for label, d in (("macro avg", rep.macro_avg), ("weighted avg", rep.weighted_avg)):
                w.writerow([label, repr(d["precision"]), repr(d["recall"]), repr(d["f1"]), cm.total])
        written.append(path)

        path = os.path.join(out_dir, "confusion.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["true\\pred"] + cm.class_names)
            for name, row in zip(cm.class_names, cm.counts):
                w.writerow([name] + [int(v) for v in row])
        written.append(path)

        for curve in curves:
            path = os.path.join(out_dir, f"roc_{_safe_name(curve.class_name)}.csv")
            with open(path, "w", encoding="utf-8", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["fpr", "tpr"])
                for x, y in zip(curve.fpr, curve.tpr):
                    w.writerow([repr(float(x)), repr(float(y))])
            written.append(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    return written


def format_report(rep):
    """Human-readable table in the usual classification-report shape."""
    width = max(len(c.name) for c in rep.classes) + 2
    lines = [f"{'':<{width}}precision    recall  f1-score   support"]
    for c in rep.classes:
        lines.append(f"{c.name:<{width}}{c.precision:9.2f} {c.recall:9.2f} {c.f1:9.2f} {c.support:9d}")
    total = sum(c.support for c in rep.classes)
    lines.append("")
    lines.append(f"{'accuracy':<{width}}{'':9} {'':9} {rep.accuracy:9.2f} {total:9d}")
    for label, d in (("macro avg", rep.macro_avg), ("weighted avg", rep.weighted_avg)):
        lines.append(f"{label:<{width}}{d['precision']:9.2f} {d['recall']:9.2f} {d['f1']:9.2f} {total:9d}")
    return "\n".join(lines)
