"""Confusion matrices, per-class precision/recall/F1 and table-style reports."""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: float


@dataclass
class MetricsReport:
    classes: list
    per_class: dict          # label -> ClassMetrics
    accuracy: float
    macro_avg: ClassMetrics
    weighted_avg: ClassMetrics
    confusion: np.ndarray | None = None

    def to_dict(self):
        def row(m):
            return {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
        return {
            "classes": list(self.classes),
            "per_class": {c: row(self.per_class[c]) for c in self.classes},
            "accuracy": self.accuracy,
            "macro_avg": row(self.macro_avg),
            "weighted_avg": row(self.weighted_avg),
            "confusion": None if self.confusion is None else self.confusion.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        def row(r):
            return ClassMetrics(r["precision"], r["recall"], r["f1"], r["support"])
        conf = d.get("confusion")
        return cls(list(d["classes"]), {c: row(d["per_class"][c]) for c in d["classes"]},
                   d["accuracy"], row(d["macro_avg"]), row(d["weighted_avg"]),
                   None if conf is None else np.asarray(conf, dtype=np.int64))


def confusion_matrix(y_true, y_pred, classes) -> np.ndarray:
    """Rows are true classes, columns predicted, both in ``classes`` order."""
    y_true, y_pred = [str(v) for v in y_true], [str(v) for v in y_pred]
    if len(y_true) != len(y_pred):
        raise ValueError(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    index = {str(c): i for i, c in enumerate(classes)}
    m = np.zeros((len(index), len(index)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if t not in index or p not in index:
            raise ValueError(f"label {t if t not in index else p!r} not among the classes")
        m[index[t], index[p]] += 1
    return m


def precision(tp, fp) -> float:
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def recall(tp, fn) -> float:
    return tp / (tp + fn) if tp + fn > 0 else 0.0


def f1(p, r) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def aggregate(per_class: dict, accuracy: float | None = None) -> tuple[float, ClassMetrics, ClassMetrics]:
    """Accuracy, macro and support-weighted averages from per-class rows.

    When ``accuracy`` is not given it is taken as sum(support * recall) / sum(support),
    which is sum(TP) / total for any single-label evaluation.
    """
    rows = list(per_class.values())
    if not rows:
        raise ValueError("no classes to aggregate")
    total = sum(m.support for m in rows)
    if total <= 0:
        raise ValueError("total support must be positive")
    n = len(rows)
    macro = ClassMetrics(sum(m.precision for m in rows) / n, sum(m.recall for m in rows) / n,
                         sum(m.f1 for m in rows) / n, total)
    weighted = ClassMetrics(sum(m.support * m.precision for m in rows) / total,
                            sum(m.support * m.recall for m in rows) / total,
                            sum(m.support * m.f1 for m in rows) / total, total)
    if accuracy is None:
        accuracy = weighted.recall
    return accuracy, macro, weighted


def report_from_confusion(conf: np.ndarray, classes) -> MetricsReport:
    conf = np.asarray(conf, dtype=np.int64)
    names = [str(c) for c in classes]
    per_class = {}
    for i, c in enumerate(names):
        tp = int(conf[i, i])
        fp = int(conf[:, i].sum()) - tp
        fn = int(conf[i, :].sum()) - tp
        p, r = precision(tp, fp), recall(tp, fn)
        per_class[c] = ClassMetrics(p, r, f1(p, r), int(conf[i, :].sum()))
    accuracy = float(np.trace(conf)) / conf.sum() if conf.sum() else 0.0
    accuracy, macro, weighted = aggregate(per_class, accuracy)
    return MetricsReport(names, per_class, accuracy, macro, weighted, conf)


def evaluate(y_true, y_pred, classes) -> MetricsReport:
    return report_from_confusion(confusion_matrix(y_true, y_pred, classes), classes)


def report_from_rates(rows: dict, supports: dict) -> MetricsReport:
    """Report from per-class (precision, recall) pairs and test supports; F1 is recomputed."""
    per_class = {}
    for c, (p, r) in rows.items():
        per_class[str(c)] = ClassMetrics(p, r, f1(p, r), supports[c])
    accuracy, macro, weighted = aggregate(per_class)
    return MetricsReport(list(per_class), per_class, accuracy, macro, weighted)


def macro_f1(y_true, y_pred, classes) -> float:
    return evaluate(y_true, y_pred, classes).macro_avg.f1


def _r2(x) -> str:
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_text(report: MetricsReport) -> str:
    width = max([len("Weighted avg")] + [len(c) for c in report.classes])
    lines = [f"{'':<{width}}  {'Precision':>9}  {'Recall':>9}  {'F1-score':>9}"]
    for c in report.classes:
        m = report.per_class[c]
        lines.append(f"{c:<{width}}  {_r2(m.precision):>9}  {_r2(m.recall):>9}  {_r2(m.f1):>9}")
    lines.append(f"{'Accuracy':<{width}}  {'':>9}  {'':>9}  {_r2(report.accuracy):>9}")
    for name, m in (("Macro avg", report.macro_avg), ("Weighted avg", report.weighted_avg)):
        lines.append(f"{name:<{width}}  {_r2(m.precision):>9}  {_r2(m.recall):>9}  {_r2(m.f1):>9}")
    return "\n".join(lines) + "\n"


def render_report(report: MetricsReport, fmt: str = "text") -> bytes:
    if not report.classes:
        raise ValueError("report has no classes")
    if fmt == "text":
        return render_text(report).encode()
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n").encode()
    raise ValueError(f"unknown report format {fmt!r}")
