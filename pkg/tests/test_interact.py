import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qdiff.data import BLOOM_LABELS, CLS, SEP, Dataset, QuestionRecord, build_vocab
from qdiff.encoder import EncoderConfig, forward, init_params
from qdiff.interact import (
    attend_backward,
    attend_forward,
    decode_label,
    interactive_attention,
    label_embedding,
)

CFG = EncoderConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=16, vocab_size=40)


def test_decode_argmax_and_ties():
    assert decode_label([0.1, 0.9, 0.0, 0.0], BLOOM_LABELS) == "applying"
    assert decode_label([2.0, 1.0, 2.0, 0.0], BLOOM_LABELS) == "analyzing"
    assert decode_label([0.5] * 4, BLOOM_LABELS) == "analyzing"
    with pytest.raises(ValueError):
        decode_label([], ())
    with pytest.raises(ValueError):
        decode_label([1.0, 2.0], BLOOM_LABELS)


def test_zero_parameters_give_uniform_mean():
    rng = np.random.default_rng(0)
    t = rng.normal(size=(5, 3))
    mask = np.array([1, 1, 0, 1, 0])
    out = interactive_attention(t, mask, rng.normal(size=3), np.zeros((3, 3)), 0.0)
    np.testing.assert_allclose(out.alpha, [1 / 3, 1 / 3, 0, 1 / 3, 0], atol=1e-15)
    np.testing.assert_allclose(out.t_r, t[[0, 1, 3]].mean(axis=0), atol=1e-15)


def test_single_position():
    t = np.array([[2.0, -1.0], [9.0, 9.0]])
    out = interactive_attention(t, np.array([1, 0]), np.array([0.3, 0.1]), np.eye(2), 0.5)
    np.testing.assert_allclose(out.alpha, [1.0, 0.0])
    np.testing.assert_allclose(out.t_r, t[0])


def test_hand_computed_two_tokens():
    out = interactive_attention(np.eye(2), np.array([1, 1]), np.array([1.0, 0.0]), np.eye(2), 0.0,
                                label_used="remembering")
    s = np.tanh(1.0)
    a0 = np.exp(s) / (np.exp(s) + 1.0)
    np.testing.assert_allclose(out.alpha, [a0, 1 - a0], atol=1e-12)
    np.testing.assert_allclose(out.t_r, [a0, 1 - a0], atol=1e-12)
    # a0 = sigmoid(tanh 1) = 0.681704...; five-decimal hand values agree to 1e-4
    np.testing.assert_allclose(out.alpha, [0.68166, 0.31834], atol=1e-4)
    assert out.label_used == "remembering"


def test_all_masked_rejected():
    with pytest.raises(ValueError):
        interactive_attention(np.eye(2), np.array([0, 0]), np.ones(2), np.eye(2))


@settings(max_examples=80, deadline=None)
@given(t=arrays(np.float64, (6, 4), elements=st.floats(-10, 10)),
       u=arrays(np.float64, (4,), elements=st.floats(-3, 3)),
       w=arrays(np.float64, (4, 4), elements=st.floats(-3, 3)),
       mask=arrays(np.int8, (6,), elements=st.integers(0, 1)))
def test_convex_combination_properties(t, u, w, mask):
    mask[0] = 1
    out = interactive_attention(t, mask, u, w, 0.1)
    assert abs(out.alpha.sum() - 1) < 1e-9
    assert np.all(out.alpha[mask == 0] == 0)
    rows = t[mask == 1]
    assert np.all(out.t_r >= rows.min(0) - 1e-9)
    assert np.all(out.t_r <= rows.max(0) + 1e-9)


def test_attend_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    b, n, d = 2, 5, 3
    t = rng.normal(size=(b, n, d))
    mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=np.float64)
    u = rng.normal(size=(b, d))
    w_a = rng.normal(size=(d, d))
    b_a = np.array([0.2])
    g = rng.normal(size=(b, d))

    def f(t, u, w_a, b_a):
        return float((attend_forward(t, mask, u, w_a, b_a)[0] * g).sum())

    _, _, cache = attend_forward(t, mask, u, w_a, b_a)
    d_t, d_u, d_w, d_b = attend_backward(cache, g, w_a)
    eps = 1e-6
    for arr, grad, idx in ((t, d_t, 0), (u, d_u, 1), (w_a, d_w, 2), (b_a, d_b, 3)):
        flat = arr.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = f(t, u, w_a, b_a)
            flat[i] = old - eps
            fm = f(t, u, w_a, b_a)
            flat[i] = old
            num[i] = (fp - fm) / (2 * eps)
        if idx == 0:
            # masked rows contribute nothing to T_r
            grad = grad * mask[:, :, None]
        np.testing.assert_allclose(grad.reshape(-1), num, atol=1e-8)


def _vocab():
    return build_vocab(Dataset.from_records([QuestionRecord("define the atom")]), 40)


def test_label_embedding_single_and_two_tokens():
    vocab = _vocab()
    params = init_params(CFG, seed=1, dtype=np.float64)
    one = label_embedding(params, CFG, vocab, "remembering")
    ids = np.array([[CLS, vocab.lookup("remembering"), SEP]])
    hidden, _, _ = forward(params, CFG, ids, np.ones((1, 3), dtype=np.int8))
    np.testing.assert_allclose(one, hidden[0, 1], atol=1e-12)

    two = label_embedding(params, CFG, vocab, "remembering understanding")
    ids = np.array([[CLS, vocab.lookup("remembering"), vocab.lookup("understanding"), SEP]])
    hidden, _, _ = forward(params, CFG, ids, np.ones((1, 4), dtype=np.int8))
    np.testing.assert_allclose(two, hidden[0, 1:3].mean(axis=0), atol=1e-12)

    again = label_embedding(params, CFG, vocab, "remembering")
    np.testing.assert_array_equal(one, again)
    with pytest.raises(ValueError):
        label_embedding(params, CFG, vocab, "  ")
