"""Auxiliary-label interaction: decode the predicted label, embed its text with
the shared encoder, and attend from the input tokens to that embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder, kernels
from .data import CLS, PAD, SEP, tokenize


@dataclass(frozen=True)
class AttentionOutcome:
    alpha: np.ndarray
    t_r: np.ndarray
    label_used: str | None = None


def init_params(d_model, seed=0, dtype=np.float32, prefix="inter."):
    rng = np.random.default_rng(seed)
    return {
        prefix + "w_a": (rng.standard_normal((d_model, d_model)) * encoder.INIT_STD).astype(dtype),
        prefix + "b_a": np.zeros((1,), dtype=dtype),
    }


def decode_label(logits, inventory):
    """Label at the argmax; ties go to the lowest (alphabetical) index."""
    if len(inventory) == 0:
        raise ValueError("label inventory is empty")
    logits = np.asarray(logits)
    if logits.shape != (len(inventory),):
        raise ValueError("logits length must equal the inventory size")
    return inventory[int(np.argmax(logits))]


def label_batch(vocab, labels):
    """Encode label texts as ``[CLS] tokens [SEP]`` rows.

    Returns ``(ids, mask, word_mask)`` where ``word_mask`` marks the label
    word positions only (specials excluded).
    """
    toks = []
    for text in labels:
        words = tokenize(text)
        if not words:
            raise ValueError(f"label text {text!r} has no tokens")
        toks.append([vocab.lookup(w) for w in words])
    width = max(len(t) for t in toks) + 2
    ids = np.full((len(toks), width), PAD, dtype=np.int64)
    mask = np.zeros((len(toks), width), dtype=np.int8)
    word_mask = np.zeros((len(toks), width), dtype=np.float64)
    for i, t in enumerate(toks):
        ids[i, : len(t) + 2] = [CLS, *t, SEP]
        mask[i, : len(t) + 2] = 1
        word_mask[i, 1 : len(t) + 1] = 1.0
    return ids, mask, word_mask


def embed_labels_forward(params, config, vocab, labels, prefix="enc."):
    """Mean final-layer vector over each label's word positions.

    Returns ``(U [L, D], cache)``.
    """
    ids, mask, word_mask = label_batch(vocab, labels)
    hidden, _, enc_cache = encoder.forward(params, config, ids, mask, prefix)
    weights = (word_mask / word_mask.sum(axis=1, keepdims=True)).astype(hidden.dtype)
    U = np.einsum("ln,lnd->ld", weights, hidden)
    return U, (enc_cache, weights)


def embed_labels_backward(params, config, cache, dU, grads, prefix="enc."):
    enc_cache, weights = cache
    d_hidden = weights[:, :, None] * dU[:, None, :]
    encoder.backward(params, config, enc_cache, d_hidden, None, grads, prefix)


def label_embedding(params, config, vocab, label_text, prefix="enc."):
    """``bloom_avg`` for a single label text."""
    if not label_text or not tokenize(label_text):
        raise ValueError("label text must be non-empty")
    U, _ = embed_labels_forward(params, config, vocab, [label_text], prefix)
    return U[0]


def attend_forward(t_emb, mask, u, w_a, b_a):
    """Batched interactive attention.

    ``t_emb`` [B, N, D] (masked rows ignored), ``mask`` [B, N], ``u`` [B, D]
    label embeddings. Score ``s_i = tanh(t_i . W_a . u + b_a)``, softmax over
    unmasked positions, ``T_r = sum_i alpha_i t_i``.
    """
    w = u @ w_a.T
    e = np.einsum("bnd,bd->bn", t_emb, w) + b_a[0]
    s = np.tanh(e)
    alpha = kernels.masked_softmax(np.ascontiguousarray(s), np.ascontiguousarray(mask))
    t_r = np.einsum("bn,bnd->bd", alpha, t_emb)
    return t_r, alpha, (t_emb, u, w, s, alpha)


def attend_backward(cache, d_t_r, w_a):
    """Returns ``(d_t_emb, d_u, d_w_a, d_b_a)``."""
    t_emb, u, w, s, alpha = cache
    d_alpha = np.einsum("bnd,bd->bn", t_emb, d_t_r)
    d_t = alpha[:, :, None] * d_t_r[:, None, :]
    ds = kernels.masked_softmax_backward(alpha, np.ascontiguousarray(d_alpha))
    de = ds * (1.0 - s * s)
    d_t += de[:, :, None] * w[:, None, :]
    dw = np.einsum("bn,bnd->bd", de, t_emb)
    d_w_a = dw.T @ u
    d_u = dw @ w_a
    d_b_a = np.array([de.sum()], dtype=t_emb.dtype)
    return d_t, d_u, d_w_a, d_b_a


def interactive_attention(t_emb, mask, label_vec, w_a, b_a=0.0, label_used=None):
    """Single-sequence form: returns an AttentionOutcome."""
    t_emb = np.asarray(t_emb)
    mask = np.asarray(mask)
    if mask.shape != (t_emb.shape[0],):
        raise ValueError("mask length must equal the number of token rows")
    if not mask.any():
        raise ValueError("interactive attention needs at least one unmasked position")
    w_a = np.asarray(w_a)
    b = np.atleast_1d(np.asarray(b_a, dtype=t_emb.dtype))
    t_r, alpha, _ = attend_forward(
        t_emb[None], mask[None].astype(t_emb.dtype), np.asarray(label_vec)[None], w_a, b
    )
    return AttentionOutcome(alpha[0], t_r[0], label_used)
