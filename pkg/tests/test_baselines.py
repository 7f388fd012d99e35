import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import TABLE2, TABLE2_COLS, TABLE2_ROWS
from qdiff import baselines as B
from qdiff.analysis import ContingencyTable
from qdiff.data import Dataset, QuestionRecord, SyntheticConfig, generate_synthetic


def _ds(pairs, closed=True, bloom=None):
    return Dataset.from_records(
        [QuestionRecord(q, difficulty=d, bloom=bloom) for q, d in pairs], closed=closed)


def _table2_model():
    order = sorted(TABLE2_ROWS)
    counts = np.array([TABLE2[TABLE2_ROWS.index(r)] for r in order])
    return B.CooccurrenceModel.from_table(ContingencyTable(tuple(order), TABLE2_COLS, counts))


def test_rule_table2_mapping():
    m = _table2_model()
    assert B.rule_predict(m, "remembering") == "easy"
    assert B.rule_predict(m, "understanding") == "difficult"
    assert B.rule_predict(m, "applying") == "difficult"
    assert B.rule_predict(m, "analyzing") == "difficult"
    assert m.global_counts == {"difficult": 14146, "easy": 13895, "medium": 5519}


def test_rule_fit_ties_and_unseen():
    recs = [QuestionRecord("q", None, "easy", "applying"), QuestionRecord("q", None, "medium", "applying"),
            QuestionRecord("q", None, "medium", "remembering")]
    m = B.rule_fit(Dataset.from_records(recs))
    # tie on applying: medium is globally more frequent
    assert B.rule_predict(m, "applying") == "medium"
    assert B.rule_predict(m, "analyzing") == "medium"
    recs = [QuestionRecord("q", None, "medium", "applying"), QuestionRecord("q", None, "easy", "applying")]
    assert B.rule_predict(B.rule_fit(Dataset.from_records(recs)), "applying") == "easy"


def test_rule_fit_errors():
    with pytest.raises(ValueError):
        B.rule_fit(Dataset.from_records([]))
    with pytest.raises(ValueError, match="record 0"):
        B.rule_fit(Dataset.from_records([QuestionRecord("q", difficulty="easy")]))


@settings(max_examples=50, deadline=None)
@given(st.text(max_size=40), st.sampled_from(TABLE2_COLS))
def test_rule_ignores_text(text, bloom):
    m = _table2_model()
    rec = QuestionRecord(text or "x", bloom=bloom) if (text or "x").strip() else QuestionRecord("x", bloom=bloom)
    assert B.rule_predict(m, rec.bloom) == B.rule_predict(m, bloom)


def test_extract_bloom_verbs():
    assert B.extract_bloom_verbs("Explain the concept of rotation of Earth.") == ["explain"]
    assert B.extract_bloom_verbs("What are artificial sweetening agents?") == ["what"]
    assert B.extract_bloom_verbs("the blue sky") == []
    assert B.extract_bloom_verbs("Compared and compares, then compare") == ["compared", "compares", "compare"]
    assert B.extract_bloom_verbs("Define define DEFINE") == ["define"] * 3


def test_lexicon_resource_and_custom(tmp_path):
    lex = B.default_lexicon()
    assert lex["explain"] == "understanding"
    assert lex["applying"] == "applying" or "applying" in lex
    assert len({v for v in lex}) > 300
    p = tmp_path / "lex.tsv"
    p.write_text("# custom\nfrobnicate\tcreating\n", encoding="utf-8")
    custom = B.load_lexicon(p)
    assert custom["frobnicates"] == "creating"
    assert B.extract_bloom_verbs("they frobnicated it", custom) == ["frobnicated"]


def test_bloom_verb_weight_cases():
    ds = _ds([("define cells", "easy")] * 5 + [("explain a", "easy"), ("explain b", "medium"),
                                                ("explain c", "difficult")])
    w = B.bloom_verb_weights(ds)
    assert w.get("define", "easy") == 15
    assert w.get("define", "medium") is None
    assert [w.get("explain", d) for d in ("easy", "medium", "difficult")] == [1, 1, 1]
    assert w.label_presence == {"define": 1, "explain": 3}
    assert w.max_weight("define") == 15 and w.max_weight("zzz") is None


@pytest.mark.parametrize("k", [1, 2, 3, 7])
def test_bloom_verb_weight_linear_in_frequency(k):
    ds = _ds([("compare x", "easy")] * k + [("compare y", "medium")])
    w = B.bloom_verb_weights(ds)
    assert w.get("compare", "easy") == k * 3 / 2
    assert w.get("compare", "medium") == 3 / 2


def test_tfidf_idf_and_normalisation():
    m = B.tfidf_fit(["a b c"] * 4)
    np.testing.assert_array_equal(m.idf, np.ones(3))
    assert B.tfidf_transform(m, "").nnz == 0
    assert B.tfidf_transform(m, "unseen words").nnz == 0
    m = B.tfidf_fit(["a b", "b c c", "d"])
    for text in ("a b", "c c c d", "b"):
        v = B.tfidf_transform(m, text).toarray()[0]
        assert abs(np.linalg.norm(v) - 1) < 1e-9
    v = B.tfidf_transform(m, "a a b").toarray()[0]
    idf = {t: np.log(4 / (1 + df)) + 1 for t, df in (("a", 1), ("b", 2))}
    raw = np.array([2 * idf["a"], idf["b"]])
    np.testing.assert_allclose(v[:2], raw / np.linalg.norm(raw), atol=1e-12)


def test_centroid_identical_documents():
    ds = _ds([("define the atom", "easy")] * 3 + [("compare two gases", "difficult")] * 2
             + [("explain the tides", "medium")] * 4)
    m = B.tfidf_bw_fit(ds)
    for text, lab in (("define the atom", "easy"), ("compare two gases", "difficult"),
                      ("explain the tides", "medium")):
        assert B.tfidf_bw_predict(m, text) == lab


def test_centroid_disjoint_two_class():
    ds = _ds([("alpha beta", "easy"), ("beta gamma", "easy"), ("delta eps", "medium"),
              ("eps zeta", "medium")], closed=False)
    m = B.tfidf_bw_fit(ds)
    assert all(m.predict(r.question) == r.difficulty for r in ds)


def test_centroid_zero_query_warns():
    ds = _ds([("alpha", "easy"), ("beta", "medium"), ("gamma", "difficult")])
    m = B.tfidf_bw_fit(ds)
    with pytest.warns(UserWarning):
        assert m.predict("nothing known here") == "difficult"


def test_centroid_missing_class_raises():
    with pytest.raises(ValueError, match="absent"):
        B.tfidf_bw_fit(_ds([("alpha", "easy"), ("beta", "medium")]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_nearest_centroid_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(3, 5))
    q = rng.normal(size=5)
    labels = ("x", "y", "z")
    assert B.nearest_centroid(q, c, labels) == B.nearest_centroid(q * scale, c * scale, labels)


def test_nearest_centroid_ties_alphabetical():
    c = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert B.nearest_centroid(np.array([1.0, 0.0]), c, ("m", "b", "z")) == "b"


def test_margin_separable():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(2, 0.5, size=(30, 2)), rng.normal(-2, 0.5, size=(30, 2))])
    y = ["pos"] * 30 + ["neg"] * 30
    clf = B.linear_margin_fit(X, y, epochs=50, lam=1e-3, seed=0)
    assert clf.predict(X) == y


def test_margin_three_classes_and_determinism():
    rng = np.random.default_rng(1)
    centres = np.array([[4, 0], [-4, 0], [0, 4]])
    X = np.vstack([rng.normal(c, 0.4, size=(20, 2)) for c in centres])
    y = ["a"] * 20 + ["b"] * 20 + ["c"] * 20
    c1 = B.linear_margin_fit(X, y, epochs=30, lam=1e-3, seed=4)
    c2 = B.linear_margin_fit(X, y, epochs=30, lam=1e-3, seed=4)
    assert np.array_equal(c1.coef, c2.coef)
    assert np.mean(np.array(c1.predict(X)) == np.array(y)) == 1.0


def test_margin_identical_vectors():
    X = np.ones((7, 3))
    y = ["b"] * 4 + ["a"] * 3
    clf = B.linear_margin_fit(X, y, epochs=20, lam=1e-2)
    assert set(clf.predict(X)) == {"b"}
    # exact score ties go to the alphabetical first label
    clf.coef[:] = 0
    assert clf.predict(X[:1]) == ["a"]


def test_margin_single_class():
    with pytest.raises(ValueError):
        B.linear_margin_fit(np.ones((3, 2)), ["a"] * 3)


def test_tfidf_margin_on_synthetic():
    ds = generate_synthetic(SyntheticConfig(n_samples=300, seed=3))
    tfidf, clf = B.tfidf_margin_fit(ds, epochs=10)
    preds = clf.predict(tfidf.transform_many(B.record_text(r) for r in ds))
    assert np.mean([p == r.difficulty for p, r in zip(preds, ds)]) > 0.8
