"""Bayes-optimal difficulty scores for the synthetic generator.

Enumerates the generator's exact joint distribution over (Bloom level,
difficulty, observed verb level, observed difficulty cue) and reports the
accuracy and macro-F1 of the best possible predictor given different
subsets of the observable cues.

    python3 benchmarks/bayes_ceiling.py [--rho 0.9] [--noise 0.1]
"""

import argparse

import numpy as np

from qdiff.data import BLOOM_CUES, BLOOM_LABELS, BLOOM_TO_DIFFICULTY, DIFFICULTY_LABELS


def joint(rho, noise):
    n_verbs = sum(len(v) for v in BLOOM_CUES.values())
    out = {}
    for b in BLOOM_LABELS:
        for d in DIFFICULTY_LABELS:
            pd = rho * (d == BLOOM_TO_DIFFICULTY[b]) + (1 - rho) / len(DIFFICULTY_LABELS)
            for v in BLOOM_LABELS:
                pv = (1 - noise) * (v == b) + noise * len(BLOOM_CUES[v]) / n_verbs
                for c in DIFFICULTY_LABELS:
                    pc = (1 - noise) * (c == d) + noise / len(DIFFICULTY_LABELS)
                    out[b, d, v, c] = pd * pv * pc / len(BLOOM_LABELS)
    return out


def bayes_scores(p, features):
    groups = {}
    for (b, d, v, c), mass in p.items():
        key = features(b, v, c)
        groups.setdefault(key, {}).setdefault(d, 0.0)
        groups[key][d] += mass
    labels = DIFFICULTY_LABELS
    cm = np.zeros((len(labels), len(labels)))
    for dist in groups.values():
        pred = max(labels, key=lambda x: (dist.get(x, 0.0), -labels.index(x)))
        for d, mass in dist.items():
            cm[labels.index(d), labels.index(pred)] += mass
    tp = np.diag(cm)
    prec = np.divide(tp, cm.sum(0), out=np.zeros(len(labels)), where=cm.sum(0) > 0)
    rec = tp / cm.sum(1)
    f1 = np.divide(2 * prec * rec, prec + rec, out=np.zeros(len(labels)), where=prec + rec > 0)
    return float(tp.sum()), float(f1.mean())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rho", type=float, default=0.9)
    ap.add_argument("--noise", type=float, default=0.1)
    args = ap.parse_args()
    p = joint(args.rho, args.noise)
    for name, feat in (("difficulty cue only", lambda b, v, c: c),
                       ("verb level only", lambda b, v, c: v),
                       ("verb level + cue", lambda b, v, c: (v, c)),
                       ("true Bloom + cue", lambda b, v, c: (b, c))):
        acc, f1 = bayes_scores(p, feat)
        print(f"{name:22s} accuracy {acc:.4f}  macro-F1 {f1:.4f}")


if __name__ == "__main__":
    main()
