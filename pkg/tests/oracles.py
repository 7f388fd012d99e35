"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle restates its definition
directly so that agreement is evidence, not tautology.
"""

from fractions import Fraction

import mpmath

# Difficulty x Bloom counts of the science question corpus (rows easy,
# difficult, medium; columns analyzing, applying, remembering, understanding).
TABLE2_ROWS = ("easy", "difficult", "medium")
TABLE2_COLS = ("analyzing", "applying", "remembering", "understanding")
TABLE2 = (
    (756, 1488, 7146, 4505),
    (2089, 2529, 2518, 7010),
    (585, 980, 1712, 2242),
)
TABLE2_N = 33560


def chi2_and_v_mp(counts, dps=50):
    """Chi-squared and Cramer's V in arbitrary precision."""
    with mpmath.workdps(dps):
        rows = [mpmath.mpf(sum(r)) for r in counts]
        cols = [mpmath.mpf(sum(c)) for c in zip(*counts)]
        n = mpmath.fsum(rows)
        chi2 = mpmath.mpf(0)
        for i, r in enumerate(counts):
            for j, o in enumerate(r):
                e = rows[i] * cols[j] / n
                chi2 += (o - e) ** 2 / e
        k = min(len(rows), len(cols)) - 1
        v = mpmath.sqrt(chi2 / (n * k))
        return float(chi2), float(v)


def confusion_metrics(y_true, y_pred, labels):
    """Exact (Fraction) per-class, macro and weighted P/R/F1 plus accuracy."""
    idx = {lab: i for i, lab in enumerate(labels)}
    k = len(labels)
    cm = [[0] * k for _ in range(k)]
    for t, p in zip(y_true, y_pred):
        cm[idx[t]][idx[p]] += 1
    per = {}
    for c, lab in enumerate(labels):
        tp = cm[c][c]
        fp = sum(cm[r][c] for r in range(k)) - tp
        fn = sum(cm[c]) - tp
        p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        per[lab] = (p, r, f, sum(cm[c]))
    present = [lab for lab in labels if per[lab][3] > 0]
    n = len(y_true)
    macro = tuple(sum(per[l][i] for l in present) / len(present) for i in range(3))
    weighted = tuple(sum(per[l][i] * per[l][3] for l in present) / n for i in range(3))
    acc = Fraction(sum(cm[c][c] for c in range(k)), n)
    return per, macro, weighted, acc
