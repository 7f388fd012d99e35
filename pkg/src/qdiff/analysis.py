"""Contingency tables, chi-squared / Cramer's V, classification metrics and
paired significance tests."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from fractions import Fraction
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels

BOOTSTRAP_RESAMPLES = 10_000


@dataclass(frozen=True)
class ContingencyTable:
    row_labels: tuple
    col_labels: tuple
    counts: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["difficulty\\bloom", *self.col_labels])
        for label, row in zip(self.row_labels, self.counts):
            w.writerow([label, *(int(c) for c in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        cols = tuple(rows[0][1:])
        labels = tuple(r[0] for r in rows[1:])
        counts = np.array([[int(c) for c in r[1:]] for r in rows[1:]], dtype=np.int64)
        return cls(labels, cols, counts)


def contingency(dataset, row_task="difficulty", col_task="bloom"):
    """Count label pairs; rows/columns follow the dataset's alphabetical inventories."""
    if len(dataset) == 0:
        raise ValueError("contingency needs at least one labelled record")
    rows, cols = dataset.labels(row_task), dataset.labels(col_task)
    ri = {lab: i for i, lab in enumerate(rows)}
    ci = {lab: i for i, lab in enumerate(cols)}
    counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for i, rec in enumerate(dataset):
        r, c = rec.label(row_task), rec.label(col_task)
        if r is None or c is None:
            raise ValueError(f"record {i}: missing {row_task if r is None else col_task} label")
        counts[ri[r], ci[c]] += 1
    return ContingencyTable(tuple(rows), tuple(cols), counts)


def _counts(table):
    counts = table.counts if isinstance(table, ContingencyTable) else np.asarray(table)
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2 or min(counts.shape) < 2:
        raise ValueError("association statistics need at least a 2x2 table")
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    if counts.sum() <= 0:
        raise ValueError("table is empty")
    if (counts.sum(axis=1) == 0).any() or (counts.sum(axis=0) == 0).any():
        raise ValueError("table has an all-zero row or column")
    return counts


def chi_squared(table):
    """Pearson's statistic sum((O - E)^2 / E), E = row_total * col_total / n."""
    o = _counts(table)
    expected = np.outer(o.sum(axis=1), o.sum(axis=0)) / o.sum()
    return float(((o - expected) ** 2 / expected).sum())


def cramers_v(table):
    o = _counts(table)
    r, c = o.shape
    v = math.sqrt(chi_squared(o) / (o.sum() * min(r - 1, c - 1)))
    return min(v, 1.0)


# --------------------------------------------------------------------------
# classification metrics


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple
    per_class: dict
    macro: dict
    weighted: dict
    accuracy: float
    support: int

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "per_class": self.per_class,
            "macro": self.macro,
            "weighted": self.weighted,
            "accuracy": self.accuracy,
            "support": self.support,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def classification_metrics(y_true, y_pred, labels):
    """Per-class and averaged precision / recall / F1.

    Zero denominators give 0. Macro averages run over classes with non-zero
    support in ``y_true``; weighted averages weight by that support.
    """
    y_true = list(y_true)
    y_pred = list(y_pred)
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    if not y_true:
        raise ValueError("metrics need at least one example")
    labels = tuple(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    k = len(labels)
    try:
        t = np.array([index[y] for y in y_true])
        p = np.array([index[y] for y in y_pred])
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not in inventory") from None
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    # Exact rational arithmetic on the integer counts, rounded once at the
    # end, so identities such as weighted recall == accuracy hold bit-exactly.
    tp = [int(cm[i, i]) for i in range(k)]
    pred_tot = [int(x) for x in cm.sum(axis=0)]
    support = [int(x) for x in cm.sum(axis=1)]
    scores = {"precision": [], "recall": [], "f1": []}
    for i in range(k):
        prec = Fraction(tp[i], pred_tot[i]) if pred_tot[i] else Fraction(0)
        rec = Fraction(tp[i], support[i]) if support[i] else Fraction(0)
        f = 2 * prec * rec / (prec + rec) if prec + rec else Fraction(0)
        scores["precision"].append(prec)
        scores["recall"].append(rec)
        scores["f1"].append(f)

    present = [i for i in range(k) if support[i] > 0]
    n = len(y_true)
    per_class = {
        lab: {**{name: float(vals[i]) for name, vals in scores.items()}, "support": support[i]}
        for i, lab in enumerate(labels)
    }
    macro = {name: float(sum(vals[i] for i in present) / len(present))
             for name, vals in scores.items()}
    weighted = {name: float(sum(vals[i] * support[i] for i in range(k)) / n)
                for name, vals in scores.items()}
    accuracy = float(Fraction(sum(tp), n))
    return MetricsReport(labels, per_class, macro, weighted, accuracy, n)


# --------------------------------------------------------------------------
# significance


def significance(correct_a, correct_b, method="t", seed=0, resamples=BOOTSTRAP_RESAMPLES):
    """Two-sided p-value for a difference between two paired systems.

    ``correct_a`` / ``correct_b`` are per-example 0/1 correctness. ``"t"`` runs
    a paired t-test on the differences; ``"bootstrap"`` resamples examples
    with replacement and reports the share of centred resampled mean
    differences at least as extreme as the observed one (add-one smoothed).
    """
    a = np.asarray(correct_a, dtype=np.float64)
    b = np.asarray(correct_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two paired sequences of equal length >= 2")
    diff = a - b
    if method == "t":
        if np.all(diff == diff[0]):
            warnings.warn("differences have zero variance; returning p = 1.0", stacklevel=2)
            return 1.0
        return float(stats.ttest_rel(a, b).pvalue)
    if method == "bootstrap":
        rng = np.random.default_rng(seed)
        observed = diff.mean()
        n = len(diff)
        chunk = max(1, min(resamples, 2_000_000 // n))
        extreme = 0
        done = 0
        while done < resamples:
            reps = min(chunk, resamples - done)
            idx = rng.integers(0, n, size=(reps, n))
            means = kernels.bootstrap_mean_diffs(diff, idx)
            extreme += int(np.count_nonzero(np.abs(means - observed) >= abs(observed) - 1e-12))
            done += reps
        return (extreme + 1) / (resamples + 1)
    raise ValueError(f"unknown method {method!r}; use 't' or 'bootstrap'")
