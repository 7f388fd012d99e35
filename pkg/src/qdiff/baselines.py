"""Classical comparison systems: co-occurrence rule, TF-IDF utilities,
TF-IDF + Bloom-verb-weight centroids, and a one-vs-rest hinge-loss linear
classifier trained by stochastic subgradient descent."""

from __future__ import annotations

import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import sparse

from . import kernels
from .data import DIFFICULTY_LABELS, tokenize

WH_WORDS = frozenset({"what", "who", "whom", "whose", "why", "when", "where", "which", "how"})


def record_text(rec):
    return rec.question if not rec.answer else f"{rec.question} {rec.answer}"


# --------------------------------------------------------------------------
# rule baseline


@dataclass(frozen=True)
class CooccurrenceModel:
    counts: dict        # bloom -> {difficulty -> count}
    global_counts: dict  # difficulty -> count
    difficulty_labels: tuple

    @classmethod
    def from_table(cls, table):
        """Build from a difficulty x bloom ContingencyTable."""
        counts = {
            b: {d: int(table.counts[i, j]) for i, d in enumerate(table.row_labels)}
            for j, b in enumerate(table.col_labels)
        }
        glob = {d: int(table.counts[i].sum()) for i, d in enumerate(table.row_labels)}
        return cls(counts, glob, tuple(table.row_labels))


def rule_fit(train):
    if len(train) == 0:
        raise ValueError("rule baseline needs a non-empty training set")
    counts = defaultdict(Counter)
    for i, rec in enumerate(train):
        if rec.bloom is None or rec.difficulty is None:
            raise ValueError(f"record {i}: rule baseline needs both labels")
        counts[rec.bloom][rec.difficulty] += 1
    labels = tuple(train.difficulty_labels)
    glob = {d: sum(c[d] for c in counts.values()) for d in labels}
    return CooccurrenceModel(
        {b: {d: c[d] for d in labels} for b, c in counts.items()}, glob, labels
    )


def rule_predict(model, bloom):
    """Difficulty seen most often with ``bloom``; ties go to the globally more
    frequent difficulty, then alphabetical. Unseen Bloom -> global majority."""
    def key(d, row):
        return (-row.get(d, 0), -model.global_counts.get(d, 0), d)

    row = model.counts.get(bloom)
    if not row or sum(row.values()) == 0:
        return min(model.difficulty_labels, key=lambda d: key(d, {}))
    return min(model.difficulty_labels, key=lambda d: key(d, row))


# --------------------------------------------------------------------------
# Bloom verbs


def _inflect(verb):
    if verb.endswith("e"):
        return {verb + "s", verb + "d", verb[:-1] + "ing"}
    if verb.endswith("y") and len(verb) > 2 and verb[-2] not in "aeiou":
        return {verb[:-1] + "ies", verb[:-1] + "ied", verb + "ing"}
    if verb.endswith(("s", "x", "ch", "sh")):
        return {verb + "es", verb + "ed", verb + "ing"}
    if (len(verb) <= 4 and verb[-1] not in "aeiouwxy" and verb[-2] in "aeiou"
            and verb[-3] not in "aeiou"):
        return {verb + "s", verb + verb[-1] + "ed", verb + verb[-1] + "ing"}
    return {verb + "s", verb + "ed", verb + "ing"}


def load_lexicon(path=None):
    """Map every verb form to its Bloom level.

    The file has one ``verb<TAB>level`` pair per line; ``#`` starts a comment.
    Base forms win over generated inflections.
    """
    if path is None:
        text = resources.files("qdiff").joinpath("resources/bloom_verbs.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    base = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        verb, level = line.split("\t")
        base.setdefault(verb.strip().lower(), level.strip().lower())
    forms = {}
    for verb, level in base.items():
        for form in _inflect(verb):
            forms.setdefault(form, level)
    forms.update(base)
    return forms


_DEFAULT_LEXICON = None


def default_lexicon():
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = load_lexicon()
    return _DEFAULT_LEXICON


def extract_bloom_verbs(text, lexicon=None):
    """Lexicon verbs and wh-words in order, duplicates kept."""
    lexicon = default_lexicon() if lexicon is None else lexicon
    return [t for t in tokenize(text) if t in lexicon or t in WH_WORDS]


@dataclass(frozen=True)
class BloomVerbWeights:
    weights: dict        # (verb, label) -> Bl_W
    n_labels: int
    label_presence: dict  # verb -> number of labels containing it

    def get(self, verb, label):
        return self.weights.get((verb, label))

    def max_weight(self, verb):
        vals = [w for (v, _), w in self.weights.items() if v == verb]
        return max(vals) if vals else None


def bloom_verb_weights(train, lexicon=None, labels=None):
    """``freq(verb, label) * n_labels / n_l`` for every verb seen under a label."""
    labels = tuple(labels or train.difficulty_labels)
    freq = defaultdict(Counter)
    for rec in train:
        if rec.difficulty is None:
            continue
        for verb in extract_bloom_verbs(record_text(rec), lexicon):
            freq[verb][rec.difficulty] += 1
    weights = {}
    presence = {}
    for verb, per_label in freq.items():
        n_l = sum(1 for c in per_label.values() if c > 0)
        presence[verb] = n_l
        for label, count in per_label.items():
            if count > 0:
                weights[(verb, label)] = count * len(labels) / n_l
    return BloomVerbWeights(weights, len(labels), presence)


# --------------------------------------------------------------------------
# TF-IDF


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict     # term -> column
    doc_freq: np.ndarray
    idf: np.ndarray
    n_docs: int

    @property
    def terms(self):
        return sorted(self.vocabulary, key=self.vocabulary.get)

    def transform(self, text):
        return tfidf_transform(self, text)

    def transform_many(self, texts):
        rows = [tfidf_transform(self, t) for t in texts]
        if not rows:
            return sparse.csr_matrix((0, len(self.vocabulary)))
        return sparse.vstack(rows, format="csr")


def tfidf_fit(texts):
    """Raw term counts weighted by smoothed idf ``ln((1+N)/(1+df)) + 1``."""
    df = Counter()
    n = 0
    for text in texts:
        df.update(set(tokenize(text)))
        n += 1
    terms = sorted(df)
    vocab = {t: i for i, t in enumerate(terms)}
    dfs = np.array([df[t] for t in terms], dtype=np.float64)
    idf = np.log((1.0 + n) / (1.0 + dfs)) + 1.0
    return TfidfModel(vocab, dfs, idf, n)


def tfidf_transform(model, text):
    """L2-normalised tf-idf row (1 x |V| sparse); unseen terms are dropped."""
    counts = Counter(t for t in tokenize(text) if t in model.vocabulary)
    terms = sorted(counts, key=model.vocabulary.get)
    cols = np.array([model.vocabulary[t] for t in terms], dtype=np.int64)
    vals = np.array([counts[t] * model.idf[model.vocabulary[t]] for t in terms], dtype=np.float64)
    norm = math.sqrt(float((vals * vals).sum())) if len(vals) else 0.0
    if norm > 0:
        vals = vals / norm
    return sparse.csr_matrix(
        (vals, (np.zeros(len(cols), dtype=np.int64), cols)), shape=(1, len(model.vocabulary))
    )


# --------------------------------------------------------------------------
# TF-IDF + Bloom verb weights, nearest centroid


def _scale_verbs(tfidf, row, verbs, weight_of):
    """Multiply the coordinates of ``verbs`` in a 1 x |V| row by their weight."""
    row = row.tolil(copy=True)
    for verb in set(verbs):
        col = tfidf.vocabulary.get(verb)
        w = weight_of(verb)
        if col is not None and w is not None:
            row[0, col] = row[0, col] * w
    return row.tocsr()


@dataclass
class TfidfBloomCentroid:
    tfidf: TfidfModel = None
    weights: BloomVerbWeights = None
    centroids: np.ndarray = None
    labels: tuple = ()
    lexicon: dict = field(default=None, repr=False)

    def fit(self, train):
        labels = tuple(train.difficulty_labels)
        present = {rec.difficulty for rec in train if rec.difficulty is not None}
        missing = [lab for lab in labels if lab not in present]
        if missing:
            raise ValueError(f"difficulty classes absent from training data: {missing}")
        texts = [record_text(r) for r in train if r.difficulty is not None]
        recs = [r for r in train if r.difficulty is not None]
        self.tfidf = tfidf_fit(texts)
        self.weights = bloom_verb_weights(train, self.lexicon, labels)
        self.labels = labels
        sums = np.zeros((len(labels), len(self.tfidf.vocabulary)))
        counts = np.zeros(len(labels))
        index = {lab: i for i, lab in enumerate(labels)}
        for rec, text in zip(recs, texts):
            verbs = extract_bloom_verbs(text, self.lexicon)
            row = _scale_verbs(
                self.tfidf, tfidf_transform(self.tfidf, text), verbs,
                lambda v, lab=rec.difficulty: self.weights.get(v, lab),
            )
            k = index[rec.difficulty]
            sums[k] += row.toarray()[0]
            counts[k] += 1
        self.centroids = sums / counts[:, None]
        return self

    def vector(self, text):
        """Query vector: verb coordinates scaled by the max weight over labels."""
        verbs = extract_bloom_verbs(text, self.lexicon)
        row = _scale_verbs(self.tfidf, tfidf_transform(self.tfidf, text), verbs,
                           self.weights.max_weight)
        return row.toarray()[0]

    def predict(self, text):
        return nearest_centroid(self.vector(text), self.centroids, self.labels)

    def predict_many(self, texts):
        return [self.predict(t) for t in texts]


def nearest_centroid(query, centroids, labels):
    """Label of the centroid with the highest cosine similarity (ties alphabetical).

    A zero query has no direction; the alphabetically first label is returned.
    """
    qn = float(np.linalg.norm(query))
    if qn == 0:
        warnings.warn("zero query vector; returning the first label", stacklevel=2)
        return min(labels)
    cn = np.linalg.norm(centroids, axis=1)
    sims = np.divide(centroids @ query, cn * qn, out=np.full(len(labels), -np.inf), where=cn > 0)
    best = sims.max()
    return min(lab for lab, s in zip(labels, sims) if s == best)


# --------------------------------------------------------------------------
# linear max-margin classifier


@dataclass
class LinearMargin:
    """One-vs-rest linear classifier; each class minimises
    ``lam/2 |w|^2 + mean hinge(y w.x)`` by stochastic subgradient steps of
    size ``1/(lam t)`` with projection, returning the averaged iterate.
    A constant feature plays the role of the bias."""

    epochs: int = 50
    lam: float = 1e-4
    seed: int = 0
    labels: tuple = ()
    coef: np.ndarray = None

    def fit(self, X, y, labels=None):
        X = _dense_with_bias(X)
        y = list(y)
        labels = tuple(sorted(set(y))) if labels is None else tuple(labels)
        if len(set(y)) < 2:
            raise ValueError("linear margin classifier needs at least two classes")
        rng = np.random.default_rng(self.seed)
        order = np.concatenate(
            [rng.permutation(len(y)) for _ in range(self.epochs)]
        ).astype(np.int64) if len(y) else np.zeros(0, dtype=np.int64)
        self.labels = labels
        self.coef = np.zeros((len(labels), X.shape[1]))
        for k, lab in enumerate(labels):
            target = np.array([1.0 if v == lab else -1.0 for v in y])
            w = np.zeros(X.shape[1])
            w_sum = np.zeros(X.shape[1])
            steps = kernels.pegasos_epochs(X, target, order, float(self.lam), w, w_sum, 0)
            # the averaged iterate is far more stable than the last one
            self.coef[k] = w_sum / max(steps, 1)
        return self

    def decision_function(self, X):
        return _dense_with_bias(X) @ self.coef.T

    def predict(self, X):
        scores = self.decision_function(X)
        # argmax keeps the first maximum, i.e. the alphabetical first label
        return [self.labels[i] for i in np.argmax(scores, axis=1)]


def linear_margin_fit(X, y, epochs=50, lam=1e-4, seed=0, labels=None):
    return LinearMargin(epochs=epochs, lam=lam, seed=seed).fit(X, y, labels)


def _dense_with_bias(X):
    X = X.toarray() if sparse.issparse(X) else np.asarray(X, dtype=np.float64)
    X = np.atleast_2d(X).astype(np.float64)
    return np.ascontiguousarray(np.hstack([X, np.ones((X.shape[0], 1))]))


def tfidf_margin_fit(train, epochs=50, lam=1e-4, seed=0):
    """TF-IDF features + LinearMargin on difficulty labels."""
    recs = [r for r in train if r.difficulty is not None]
    tfidf = tfidf_fit(record_text(r) for r in recs)
    X = tfidf.transform_many(record_text(r) for r in recs)
    clf = linear_margin_fit(X, [r.difficulty for r in recs], epochs, lam, seed,
                            labels=tuple(train.difficulty_labels) or DIFFICULTY_LABELS)
    return tfidf, clf


def tfidf_bw_fit(train, lexicon=None):
    return TfidfBloomCentroid(lexicon=lexicon).fit(train)


def tfidf_bw_predict(model, text):
    return model.predict(text)


def linear_margin_predict(model, X):
    return model.predict(X)
