"""Confusion matrices, overall accuracy, macro F1, comparison tables.

Zero-denominator precision/recall count as 0; classes without ground-truth
support are left out of the macro F1 mean. OA is reported in percent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class EvaluationError(Exception):
    pass


@dataclass(eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # (N, N); rows = true class, cols = predicted
    level: str = "pixel"

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise EvaluationError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise EvaluationError("negative counts")

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(eq=False)
class EvalReport:
    cm: ConfusionMatrix
    oa: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    strategy: str = ""
    balancing: str = ""
    classifier: str = ""
    level: str = "pixel"


def confusion(y_true, y_pred, n_classes, level="pixel") -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise EvaluationError("label arrays differ in length")
    if y_true.size == 0:
        raise EvaluationError("empty input")
    if y_true.min() < 0 or y_pred.min() < 0 or max(y_true.max(), y_pred.max()) >= n_classes:
        raise EvaluationError("label outside [0, n_classes)")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts, level)


def metrics(cm: ConfusionMatrix, strategy="", balancing="", classifier="") -> EvalReport:
    c = cm.counts
    if cm.total == 0:
        raise EvaluationError("empty confusion matrix")
    tp = np.diag(c).astype(np.float64)
    support = c.sum(axis=1).astype(np.float64)       # ground-truth count per class
    predicted = c.sum(axis=0).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros_like(tp), where=pr > 0)
    supported = support > 0
    macro_f1 = float(f1[supported].mean())
    oa = 100.0 * float(tp.sum()) / cm.total
    return EvalReport(cm, oa, macro_f1, precision, recall, f1, strategy, balancing, classifier, cm.level)


# ---------------------------------------------------------------------------
# Report I/O
# ---------------------------------------------------------------------------

def report_to_json(report: EvalReport) -> str:
    doc = {
        "level": report.level,
        "classifier": report.classifier,
        "balancing": report.balancing,
        "strategy": report.strategy,
        "oa": report.oa,
        "macro_f1": report.macro_f1,
        "precision": [float(v) for v in report.precision],
        "recall": [float(v) for v in report.recall],
        "f1": [float(v) for v in report.f1],
        "confusion": report.cm.counts.tolist(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> EvalReport:
    doc = json.loads(text)
    cm = ConfusionMatrix(np.array(doc["confusion"], dtype=np.int64), doc["level"])
    return EvalReport(
        cm,
        float(doc["oa"]),
        float(doc["macro_f1"]),
        np.array(doc["precision"]),
        np.array(doc["recall"]),
        np.array(doc["f1"]),
        doc["strategy"],
        doc["balancing"],
        doc["classifier"],
        doc["level"],
    )


def save_report(report: EvalReport, path):
    Path(path).write_text(report_to_json(report), encoding="utf-8")


def load_report(path) -> EvalReport:
    return report_from_json(Path(path).read_text(encoding="utf-8"))


def report_to_csv(report: EvalReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "f1"])
        for k in range(len(report.f1)):
            writer.writerow(
                [k, repr(float(report.precision[k])), repr(float(report.recall[k])), repr(float(report.f1[k]))]
            )
        writer.writerow([])
        writer.writerow(["oa_percent", repr(report.oa)])
        writer.writerow(["macro_f1", repr(report.macro_f1)])


def format_report(report: EvalReport) -> str:
    lines = [
        f"level={report.level} classifier={report.classifier or '-'} "
        f"balancing={report.balancing or '-'} strategy={report.strategy or '-'}",
        f"OA: {report.oa:.2f}%   macro F1: {report.macro_f1:.3f}",
        "confusion (rows=true, cols=pred):",
    ]
    for row in report.cm.counts:
        lines.append("  " + " ".join(f"{v:6d}" for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Strategy comparison
# ---------------------------------------------------------------------------

def compare_strategies(reports) -> str:
    """Text comparison shaped like the pixel-wise, aggregation and
    field-wise summary tables: OA (and macro F1) per classifier x
    balancing x aggregation cell, plus Bayesian-minus-majority and
    Bayesian-minus-averaging deltas."""
    if not reports:
        raise EvaluationError("no reports to compare")
    pixel = [r for r in reports if r.level == "pixel"]
    fieldr = [r for r in reports if r.level == "field"]
    classifiers = sorted({r.classifier for r in reports})
    balancings = sorted({r.balancing for r in reports})
    strategies = sorted({r.strategy for r in fieldr})
    lines = []

    def cell(rs, **kw):
        match = [r for r in rs if all(getattr(r, k) == v for k, v in kw.items())]
        return match[0] if match else None

    if pixel:
        lines.append("Pixel-wise results: OA % (macro F1)")
        header = f"{'classifier':<12}" + "".join(f"{b or '-':>16}" for b in balancings)
        lines.append(header)
        for clf in classifiers:
            row = f"{clf or '-':<12}"
            for b in balancings:
                r = cell(pixel, classifier=clf, balancing=b)
                row += f"{r.oa:10.2f} ({r.macro_f1:.2f})" if r else f"{'---':>16}"
            lines.append(row)
        lines.append("")

    if fieldr:
        lines.append("Field-wise overall accuracy % by aggregation")
        header = f"{'balancing':<12}{'aggregation':<12}" + "".join(
            f"{c or '-':>10}" for c in classifiers
        )
        lines.append(header)
        for b in balancings:
            for s in strategies:
                row = f"{b or '-':<12}{s:<12}"
                any_cell = False
                for clf in classifiers:
                    r = cell(fieldr, classifier=clf, balancing=b, strategy=s)
                    row += f"{r.oa:10.2f}" if r else f"{'---':>10}"
                    any_cell = any_cell or r is not None
                if any_cell:
                    lines.append(row)
        lines.append("")

        bayes = [r for r in fieldr if r.strategy == "bayesian"]
        if bayes:
            lines.append("Field-wise results after Bayesian aggregation: OA % (macro F1)")
            header = f"{'classifier':<12}" + "".join(f"{b or '-':>16}" for b in balancings)
            lines.append(header)
            for clf in classifiers:
                row = f"{clf or '-':<12}"
                for b in balancings:
                    r = cell(bayes, classifier=clf, balancing=b)
                    row += f"{r.oa:10.2f} ({r.macro_f1:.2f})" if r else f"{'---':>16}"
                lines.append(row)
            lines.append("")

        deltas = []
        for clf in classifiers:
            for b in balancings:
                rb = cell(fieldr, classifier=clf, balancing=b, strategy="bayesian")
                rm = cell(fieldr, classifier=clf, balancing=b, strategy="majority")
                ra = cell(fieldr, classifier=clf, balancing=b, strategy="average")
                if rb and (rm or ra):
                    parts = [f"{clf}/{b or '-'}:"]
                    if rm:
                        parts.append(f"bayesian-majority {rb.oa - rm.oa:+.2f} pp")
                    if ra:
                        parts.append(f"bayesian-average {rb.oa - ra.oa:+.2f} pp")
                    deltas.append("  " + " ".join(parts))
        if deltas:
            lines.append("Deltas")
            lines.extend(deltas)
            lines.append("")

    return "\n".join(lines)
