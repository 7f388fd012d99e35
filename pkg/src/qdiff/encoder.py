"""Miniature post-layer-norm transformer encoder with analytic gradients.

Parameters live in a flat ``dict[str, ndarray]`` keyed by dotted names so the
optimizer, checkpoint writer and gradient checker can treat every tensor the
same way. Row-vector convention throughout: ``y = x @ W + b``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels

LN_EPS = 1e-5
INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 64
    vocab_size: int = 2000

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads:
            raise ValueError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )

    @property
    def d_head(self):
        return self.d_model // self.n_heads

    def to_dict(self):
        return asdict(self)


def _layer_shapes(cfg):
    d, f = cfg.d_model, cfg.d_ff
    return {
        # no key bias: it shifts every score in a row equally, so softmax ignores it
        "wq": (d, d), "bq": (d,), "wk": (d, d),
        "wv": (d, d), "bv": (d,), "wo": (d, d), "bo": (d,),
        "ln1_g": (d,), "ln1_b": (d,),
        "w1": (d, f), "b1": (f,), "w2": (f, d), "b2": (d,),
        "ln2_g": (d,), "ln2_b": (d,),
    }


def param_shapes(cfg, prefix="enc."):
    shapes = {
        prefix + "tok_emb": (cfg.vocab_size, cfg.d_model),
        prefix + "pos_emb": (cfg.max_len, cfg.d_model),
    }
    for layer in range(cfg.n_layers):
        for name, shape in _layer_shapes(cfg).items():
            shapes[f"{prefix}layer{layer}.{name}"] = shape
    shapes[prefix + "pool_w"] = (cfg.d_model, cfg.d_model)
    shapes[prefix + "pool_b"] = (cfg.d_model,)
    return shapes


def _init_value(name, shape, rng, dtype):
    leaf = name.rsplit(".", 1)[-1]
    if leaf.endswith("_g"):
        return np.ones(shape, dtype=dtype)
    if len(shape) == 1:
        return np.zeros(shape, dtype=dtype)
    return (rng.standard_normal(shape) * INIT_STD).astype(dtype)


def init_params(config, seed, prefix="enc.", dtype=np.float32):
    """Normal(0, 0.02) weights, zero biases, unit layer-norm scales."""
    rng = np.random.default_rng(seed)
    return {
        name: _init_value(name, shape, rng, dtype)
        for name, shape in param_shapes(config, prefix).items()
    }


# --------------------------------------------------------------------------
# primitives


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def self_attention(Q, K, V, mask=None):
    """Scaled dot-product attention for one head.

    Row i of the result is ``sum_j softmax_j(Q_i . K_j / sqrt(d_k)) V_j``;
    keys with ``mask == 0`` get zero weight.
    """
    Q, K, V = np.asarray(Q), np.asarray(K), np.asarray(V)
    n, d_k = Q.shape
    if K.shape != (n, d_k) or V.shape[0] != n:
        raise ValueError("Q, K and V must have matching shapes")
    mask = np.ones(n, dtype=np.int8) if mask is None else np.asarray(mask)
    if mask.shape != (n,):
        raise ValueError("mask length must equal the number of tokens")
    if not mask.any():
        raise ValueError("self_attention needs at least one unmasked position")
    scores = (Q @ K.T) / math.sqrt(d_k)
    weights = kernels.masked_softmax(
        np.ascontiguousarray(scores), np.ascontiguousarray(np.broadcast_to(mask, (n, n)))
    )
    return weights @ V


def _ln(x, g, b):
    shape = x.shape
    y, xhat, inv = kernels.layernorm(np.ascontiguousarray(x.reshape(-1, shape[-1])), g, b, LN_EPS)
    return y.reshape(shape), (xhat, inv, shape)


def _ln_backward(dy, cache, g):
    xhat, inv, shape = cache
    dx, dg, db = kernels.layernorm_backward(
        np.ascontiguousarray(dy.reshape(-1, shape[-1])), xhat, inv, g
    )
    return dx.reshape(shape), dg, db


# --------------------------------------------------------------------------
# batched forward / backward


def forward(params, config, ids, mask, prefix="enc."):
    """Run the stack on a padded batch.

    ``ids``/``mask`` are [B, N] with N <= max_len. Returns the final hidden
    states [B, N, D], the pooled vectors [B, D] and a cache for ``backward``.
    Padded positions are never attended to; their hidden rows are computed
    but carry no information.
    """
    ids = np.asarray(ids)
    mask = np.asarray(mask)
    B, N = ids.shape
    if N > config.max_len:
        raise ValueError(f"sequence length {N} exceeds max_len={config.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise ValueError(f"token id out of range for vocab_size={config.vocab_size}")
    p = params
    H, dh = config.n_heads, config.d_head
    scale = 1.0 / math.sqrt(dh)

    x = p[prefix + "tok_emb"][ids] + p[prefix + "pos_emb"][:N]
    keymask = np.ascontiguousarray(
        np.broadcast_to(mask[:, None, None, :], (B, H, N, N)).reshape(-1, N)
    )
    layers = []
    for layer in range(config.n_layers):
        pre = f"{prefix}layer{layer}."
        c = {"x": x}
        q = (x @ p[pre + "wq"] + p[pre + "bq"]).reshape(B, N, H, dh).transpose(0, 2, 1, 3)
        k = (x @ p[pre + "wk"]).reshape(B, N, H, dh).transpose(0, 2, 1, 3)
        v = (x @ p[pre + "wv"] + p[pre + "bv"]).reshape(B, N, H, dh).transpose(0, 2, 1, 3)
        s = (q @ k.transpose(0, 1, 3, 2)) * scale
        a = kernels.masked_softmax(np.ascontiguousarray(s.reshape(-1, N)), keymask)
        a = a.reshape(B, H, N, N)
        o = (a @ v).transpose(0, 2, 1, 3).reshape(B, N, -1)
        z = o @ p[pre + "wo"] + p[pre + "bo"]
        x1, c["ln1"] = _ln(x + z, p[pre + "ln1_g"], p[pre + "ln1_b"])
        hpre = x1 @ p[pre + "w1"] + p[pre + "b1"]
        hact = kernels.gelu(hpre)
        z2 = hact @ p[pre + "w2"] + p[pre + "b2"]
        x, c["ln2"] = _ln(x1 + z2, p[pre + "ln2_g"], p[pre + "ln2_b"])
        c.update(q=q, k=k, v=v, a=a, o=o, x1=x1, hpre=hpre, hact=hact)
        layers.append(c)

    cls = x[:, 0, :]
    pooled = np.tanh(cls @ p[prefix + "pool_w"] + p[prefix + "pool_b"])
    cache = {"ids": ids, "N": N, "layers": layers, "cls": cls, "pooled": pooled}
    return x, pooled, cache


def _acc(grads, name, value):
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value


def backward(params, config, cache, d_hidden, d_pooled, grads, prefix="enc."):
    """Accumulate parameter gradients into ``grads`` (name -> array).

    ``d_hidden`` is dL/d(final hidden states) [B, N, D] or None;
    ``d_pooled`` is dL/d(pooled) [B, D] or None.
    """
    p = params
    B, N = cache["ids"].shape
    H, dh = config.n_heads, config.d_head
    D = config.d_model
    scale = 1.0 / math.sqrt(dh)
    dtype = p[prefix + "tok_emb"].dtype

    dx = np.zeros((B, N, D), dtype=dtype) if d_hidden is None else d_hidden.astype(dtype, copy=True)
    if d_pooled is not None:
        pooled = cache["pooled"]
        dpre = d_pooled * (1.0 - pooled * pooled)
        _acc(grads, prefix + "pool_w", cache["cls"].T @ dpre)
        _acc(grads, prefix + "pool_b", dpre.sum(axis=0))
        dx[:, 0, :] += dpre @ p[prefix + "pool_w"].T

    for layer in reversed(range(config.n_layers)):
        pre = f"{prefix}layer{layer}."
        c = cache["layers"][layer]

        dr2, dg, db = _ln_backward(dx, c["ln2"], p[pre + "ln2_g"])
        _acc(grads, pre + "ln2_g", dg)
        _acc(grads, pre + "ln2_b", db)
        flat = dr2.reshape(-1, D)
        _acc(grads, pre + "w2", c["hact"].reshape(-1, config.d_ff).T @ flat)
        _acc(grads, pre + "b2", flat.sum(axis=0))
        dhact = dr2 @ p[pre + "w2"].T
        dhpre = kernels.gelu_backward(c["hpre"], dhact)
        flat_h = dhpre.reshape(-1, config.d_ff)
        _acc(grads, pre + "w1", c["x1"].reshape(-1, D).T @ flat_h)
        _acc(grads, pre + "b1", flat_h.sum(axis=0))
        dx1 = dr2 + dhpre @ p[pre + "w1"].T

        dr1, dg, db = _ln_backward(dx1, c["ln1"], p[pre + "ln1_g"])
        _acc(grads, pre + "ln1_g", dg)
        _acc(grads, pre + "ln1_b", db)
        flat = dr1.reshape(-1, D)
        _acc(grads, pre + "wo", c["o"].reshape(-1, D).T @ flat)
        _acc(grads, pre + "bo", flat.sum(axis=0))
        do = (dr1 @ p[pre + "wo"].T).reshape(B, N, H, dh).transpose(0, 2, 1, 3)

        a, q, k, v = c["a"], c["q"], c["k"], c["v"]
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = kernels.masked_softmax_backward(
            np.ascontiguousarray(a.reshape(-1, N)), np.ascontiguousarray(da.reshape(-1, N))
        ).reshape(B, H, N, N) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q

        x_in = c["x"].reshape(-1, D)
        dx = dr1
        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            flat_p = dproj.transpose(0, 2, 1, 3).reshape(-1, D)
            _acc(grads, pre + "w" + name, x_in.T @ flat_p)
            if name != "k":
                _acc(grads, pre + "b" + name, flat_p.sum(axis=0))
            dx = dx + (flat_p @ p[pre + "w" + name].T).reshape(B, N, D)

    _acc(grads, prefix + "pos_emb", _pad_rows(dx.sum(axis=0), config.max_len))
    dtok = np.zeros_like(p[prefix + "tok_emb"])
    np.add.at(dtok, cache["ids"].ravel(), dx.reshape(-1, D))
    _acc(grads, prefix + "tok_emb", dtok)
    return grads


def _pad_rows(g, rows):
    out = np.zeros((rows, g.shape[1]), dtype=g.dtype)
    out[: g.shape[0]] = g
    return out


def encode(params, config, seq, prefix="enc."):
    """Encode one TokenSequence.

    Returns ``(T_emb, T_pooled)``: final hidden states with PAD rows zeroed
    ([N, D], N = len(seq)) and the pooled CLS representation ([D]).
    """
    ids = np.asarray(seq.ids)[None, :]
    mask = np.asarray(seq.mask)[None, :]
    hidden, pooled, _ = forward(params, config, ids, mask, prefix)
    t_emb = hidden[0] * mask[0, :, None].astype(hidden.dtype)
    return t_emb, pooled[0]


# --------------------------------------------------------------------------
# gradient checking


def grad_check(closure, params, eps=1e-3, n_samples=64, seed=0, names=None):
    """Compare analytic gradients with central differences in float64.

    ``closure(params) -> (loss, grads)``. Tensors with more than
    ``n_samples`` elements are checked on a seeded random subset of that size.
    Returns ``{name: max relative error}`` where the relative error is
    ``|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    loss, grads = closure(params)
    if not np.isfinite(loss):
        raise FloatingPointError("loss is not finite")
    rng = np.random.default_rng(seed)
    report = {}
    for name in names or sorted(params):
        theta = params[name]
        flat = theta.reshape(-1)
        g_a = np.asarray(grads.get(name, np.zeros_like(theta)), dtype=np.float64).reshape(-1)
        if flat.size > n_samples:
            picks = rng.choice(flat.size, size=n_samples, replace=False)
        else:
            picks = np.arange(flat.size)
        worst = 0.0
        for i in picks:
            old = flat[i]
            flat[i] = old + eps
            f_plus = closure(params)[0]
            flat[i] = old - eps
            f_minus = closure(params)[0]
            flat[i] = old
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError(f"loss is not finite while perturbing {name}")
            g_n = (f_plus - f_minus) / (2.0 * eps)
            err = abs(g_a[i] - g_n) / max(abs(g_a[i]), abs(g_n), 1e-8)
            worst = max(worst, err)
        report[name] = worst
    return report
