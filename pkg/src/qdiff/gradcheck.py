"""Finite-difference verification of the full training loss on a tiny model."""

from __future__ import annotations

import numpy as np

from .data import SyntheticConfig, build_vocab, generate_synthetic, label_indices
from .encoder import EncoderConfig, grad_check
from .model import QDiffModel, Variant, crop, forward_batch, loss_and_grads

TINY_CONFIG = EncoderConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=32, vocab_size=50)
TOLERANCE = 1e-4
EMB_STD = 1.0
WEIGHT_STD = 0.1


def _vocab_of_size(dataset, size):
    cap = size
    vocab = build_vocab(dataset, cap)
    while len(vocab) > size:
        cap -= len(vocab) - size
        vocab = build_vocab(dataset, cap)
    return vocab


def generic_point(model, seed):
    """Redraw parameters at a non-degenerate point for checking.

    Embeddings are unit scale and every other weight and bias is
    Normal(0, 0.1); layer-norm scales are jittered around 1. At the
    training init (std 0.02) the layer-norm inputs are so small that the
    O(eps^2) truncation of central differences swamps small gradients.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for name, value in model.params.items():
        if name.endswith("_g"):
            out[name] = 1.0 + rng.standard_normal(value.shape) * WEIGHT_STD
        elif "emb" in name:
            out[name] = rng.standard_normal(value.shape) * EMB_STD
        else:
            out[name] = rng.standard_normal(value.shape) * WEIGHT_STD
    return {k: v.astype(np.float64) for k, v in out.items()}


def run_gradcheck(encoder_config=TINY_CONFIG, variant=Variant.IA, batch_size=4, seed=0,
                  eps=1e-3, n_samples=64, aux_weight=1.0):
    """Check every tensor of ``variant``'s loss; returns ``{name: max rel error}``.

    The auxiliary labels chosen by the argmax at the base point are held
    fixed while perturbing: the choice is piecewise constant, so its
    derivative is zero wherever it is defined.
    """
    data = generate_synthetic(SyntheticConfig(n_samples=max(64, batch_size), seed=seed))
    vocab = _vocab_of_size(data, encoder_config.vocab_size)
    model = QDiffModel.create(variant, data, encoder_config, seed=seed, vocab=vocab)
    model = model.astype(np.float64)
    model.params = generic_point(model, seed)

    batch = data.subset(range(batch_size))
    ids, mask = crop(*model.encode(batch))
    yb = label_indices(batch, "bloom")
    yd = label_indices(batch, "difficulty")
    gold = yb if model.variant is Variant.IA_GOLD else None
    _, cache = forward_batch(model, ids, mask, gold_aux=gold)
    choice = cache.get("chosen")

    def closure(params):
        return loss_and_grads(model, ids, mask, yb, yd, aux_weight, aux_choice=choice,
                              params=params)

    return grad_check(closure, model.params, eps=eps, n_samples=n_samples, seed=seed)
