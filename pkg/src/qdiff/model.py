"""QDiff: shared encoder, Bloom and difficulty heads, interactive attention,
joint loss, ablation variants, Adam training and inference."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import encoder, interact
from .analysis import classification_metrics
from .data import CLS, SEP, DataError, build_vocab, encode_dataset, encode_input, label_indices
from .encoder import EncoderConfig

log = logging.getLogger(__name__)

TASKS = ("bloom", "difficulty")


class Variant(str, Enum):
    IA = "IA"                  # full model: predicted Bloom label guides attention
    MULTITASK = "MULTITASK"    # interaction removed, difficulty head reads T_pooled
    IA_GOLD = "IA_GOLD"        # gold Bloom label given, difficulty loss only
    IA_FROZEN = "IA_FROZEN"    # Bloom label from a separately trained, frozen model
    CASCADE = "CASCADE"        # Bloom fine-tuning, then difficulty fine-tuning
    SWAP = "SWAP"              # predicted difficulty guides Bloom prediction

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        aliases = {"QDIFF": "IA", "IA_BERT": "IA", "IA_BD": "IA_GOLD", "IA_PB": "IA_FROZEN",
                   "MULTI_TASK": "MULTITASK"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown variant {value!r}; choose from {[v.value for v in cls]}") from None

    @property
    def interactive(self):
        return self not in (Variant.MULTITASK, Variant.CASCADE)

    @property
    def aux_task(self):
        return "difficulty" if self is Variant.SWAP else "bloom"

    @property
    def main_task(self):
        return "bloom" if self is Variant.SWAP else "difficulty"

    @property
    def default_loss_mode(self):
        if self in (Variant.IA_GOLD, Variant.IA_FROZEN):
            return "main"
        return "joint"


FINETUNE_LR = 2e-5
DESK_LR = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = DESK_LR
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    aux_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.aux_weight < 0:
            raise ValueError("aux_weight must be >= 0")

    @classmethod
    def finetune(cls, **overrides):
        """Hyperparameters used for pretrained BERT fine-tuning."""
        return cls(**{"epochs": 20, "lr": FINETUNE_LR, **overrides})


# --------------------------------------------------------------------------
# heads


def head_shapes(prefix, d_in, d_hidden, n_classes):
    return {
        prefix + "w1": (d_in, d_hidden), prefix + "b1": (d_hidden,),
        prefix + "w2": (d_hidden, n_classes), prefix + "b2": (n_classes,),
    }


def init_head(prefix, d_in, d_hidden, n_classes, seed, dtype=np.float32):
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in head_shapes(prefix, d_in, d_hidden, n_classes).items():
        if len(shape) == 1:
            out[name] = np.zeros(shape, dtype=dtype)
        else:
            out[name] = (rng.standard_normal(shape) * encoder.INIT_STD).astype(dtype)
    return out


def head_forward(params, prefix, x):
    h = np.tanh(x @ params[prefix + "w1"] + params[prefix + "b1"])
    return h @ params[prefix + "w2"] + params[prefix + "b2"], (x, h)


def head_backward(params, prefix, cache, dlogits, grads):
    x, h = cache
    grads[prefix + "w2"] = grads.get(prefix + "w2", 0) + h.T @ dlogits
    grads[prefix + "b2"] = grads.get(prefix + "b2", 0) + dlogits.sum(axis=0)
    dpre = (dlogits @ params[prefix + "w2"].T) * (1.0 - h * h)
    grads[prefix + "w1"] = grads.get(prefix + "w1", 0) + x.T @ dpre
    grads[prefix + "b1"] = grads.get(prefix + "b1", 0) + dpre.sum(axis=0)
    return dpre @ params[prefix + "w1"].T


# --------------------------------------------------------------------------
# loss


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, y):
    """Mean negative log-likelihood and its gradient w.r.t. ``logits``."""
    logits = np.atleast_2d(logits)
    y = np.atleast_1d(y)
    lp = log_softmax(logits)
    n = len(y)
    loss = -lp[np.arange(n), y].sum() / n
    grad = np.exp(lp)
    grad[np.arange(n), y] -= 1.0
    return float(loss), grad / n


def loss(bloom_logits, diff_logits, y_bloom, y_diff, lam=1.0, variant=Variant.IA):
    """``CE(difficulty) + lam * CE(bloom)``; roles swap for SWAP and the
    auxiliary term is dropped for IA_GOLD / IA_FROZEN."""
    variant = Variant.parse(variant)
    ce = {
        "bloom": cross_entropy(bloom_logits, y_bloom)[0],
        "difficulty": cross_entropy(diff_logits, y_diff)[0],
    }
    total = ce[variant.main_task]
    if variant.default_loss_mode == "joint":
        total += lam * ce[variant.aux_task]
    return total


# --------------------------------------------------------------------------
# model


@dataclass
class QDiffModel:
    encoder_config: EncoderConfig
    vocab: object
    difficulty_labels: tuple
    bloom_labels: tuple
    variant: Variant
    params: dict
    attend_specials: bool = True
    frozen: frozenset = field(default_factory=frozenset)

    @classmethod
    def create(cls, variant, train, encoder_config=None, seed=0, attend_specials=True,
               vocab=None, dtype=np.float32):
        """Fresh model for ``variant``.

        The vocabulary is built from ``train`` with ``encoder_config.vocab_size``
        as its size cap unless one is given; the stored config carries the
        actual vocabulary size.
        """
        variant = Variant.parse(variant)
        encoder_config = encoder_config or EncoderConfig()
        if vocab is None:
            vocab = build_vocab(train, encoder_config.vocab_size)
        cfg = dataclasses.replace(encoder_config, vocab_size=len(vocab))
        seeds = np.random.SeedSequence(seed).spawn(6)
        s = [int(c.generate_state(1)[0]) for c in seeds]
        d = cfg.d_model
        params = encoder.init_params(cfg, s[0], dtype=dtype)
        params.update(interact.init_params(d, s[1], dtype=dtype))
        params.update(init_head("head.bloom.", d, d, len(train.bloom_labels), s[2], dtype))
        params.update(init_head("head.difficulty.", d, d, len(train.difficulty_labels), s[3], dtype))
        frozen = frozenset()
        if variant is Variant.IA_FROZEN:
            aux = encoder.init_params(cfg, s[4], prefix="aux.enc.", dtype=dtype)
            aux.update(init_head("aux.head.bloom.", d, d, len(train.bloom_labels), s[5], dtype))
            params.update(aux)
            frozen = frozenset(aux)
        return cls(cfg, vocab, tuple(train.difficulty_labels), tuple(train.bloom_labels),
                   variant, params, attend_specials, frozen)

    def labels(self, task):
        return self.difficulty_labels if task == "difficulty" else self.bloom_labels

    def astype(self, dtype):
        return dataclasses.replace(
            self, params={k: v.astype(dtype) for k, v in self.params.items()}
        )

    def copy(self):
        return dataclasses.replace(self, params={k: v.copy() for k, v in self.params.items()})

    def trainable(self):
        return [k for k in self.params if k not in self.frozen]

    def encode(self, dataset):
        return encode_dataset(self.vocab, dataset, self.encoder_config.max_len)


def _interaction_mask(model, ids, mask):
    m = mask.astype(np.float64)
    if not model.attend_specials:
        m = m * ((ids != CLS) & (ids != SEP))
    return m


def forward_batch(model, ids, mask, gold_aux=None, aux_choice=None, params=None):
    """Forward pass over a padded batch.

    Returns ``(logits, cache)`` with ``logits = {"bloom": .., "difficulty": ..}``.
    ``gold_aux`` supplies auxiliary label indices for IA_GOLD; ``aux_choice``
    pins the auxiliary labels for any interactive variant (used by gradient
    checks so the piecewise-constant argmax is held fixed).
    """
    P = model.params if params is None else params
    cfg = model.encoder_config
    v = model.variant
    aux, main = v.aux_task, v.main_task
    hidden, pooled, enc_cache = encoder.forward(P, cfg, ids, mask)
    cache = {"enc": enc_cache, "ids": ids, "mask": mask}
    logits = {}

    if not v.interactive:
        logits[aux], cache["aux_head"] = head_forward(P, f"head.{aux}.", pooled)
        logits[main], cache["main_head"] = head_forward(P, f"head.{main}.", pooled)
        return logits, cache

    if v is Variant.IA_FROZEN:
        _, fpooled, _ = encoder.forward(P, cfg, ids, mask, prefix="aux.enc.")
        logits[aux], _ = head_forward(P, f"aux.head.{aux}.", fpooled)
    else:
        logits[aux], cache["aux_head"] = head_forward(P, f"head.{aux}.", pooled)

    if aux_choice is not None:
        chosen = np.asarray(aux_choice, dtype=np.int64)
    elif v is Variant.IA_GOLD:
        if gold_aux is None:
            raise ValueError("IA_GOLD needs the gold auxiliary label")
        chosen = np.asarray(gold_aux, dtype=np.int64)
        if (chosen < 0).any():
            raise ValueError("IA_GOLD needs the gold auxiliary label for every input")
    else:
        # argmax returns the first maximum: ties go to the alphabetical first label
        chosen = np.argmax(logits[aux], axis=1)

    U, lab_cache = interact.embed_labels_forward(P, cfg, model.vocab, model.labels(aux))
    u = U[chosen]
    pad = mask.astype(hidden.dtype)[:, :, None]
    t_emb = hidden * pad
    att_mask = _interaction_mask(model, ids, mask).astype(hidden.dtype)
    t_r, alpha, att_cache = interact.attend_forward(
        t_emb, att_mask, u, P["inter.w_a"], P["inter.b_a"]
    )
    logits[main], cache["main_head"] = head_forward(P, f"head.{main}.", t_r)
    cache.update(chosen=chosen, n_labels=len(U), lab=lab_cache, att=att_cache, alpha=alpha)
    return logits, cache


def backward_batch(model, cache, dlogits, params=None):
    """Gradients of a loss whose logit gradients are ``dlogits`` (task -> array
    or None)."""
    P = model.params if params is None else params
    cfg = model.encoder_config
    v = model.variant
    aux, main = v.aux_task, v.main_task
    grads = {}
    B, N = cache["ids"].shape
    D = cfg.d_model
    dtype = P["enc.tok_emb"].dtype
    d_pooled = np.zeros((B, D), dtype=dtype)
    d_hidden = None

    if dlogits.get(aux) is not None and "aux_head" in cache:
        d_pooled += head_backward(P, f"head.{aux}.", cache["aux_head"], dlogits[aux], grads)

    if dlogits.get(main) is not None:
        d_in = head_backward(P, f"head.{main}.", cache["main_head"], dlogits[main], grads)
        if not v.interactive:
            d_pooled += d_in
        else:
            d_t, d_u, d_w_a, d_b_a = interact.attend_backward(cache["att"], d_in, P["inter.w_a"])
            grads["inter.w_a"] = d_w_a
            grads["inter.b_a"] = d_b_a
            d_hidden = d_t * cache["mask"].astype(dtype)[:, :, None]
            dU = np.zeros((cache["n_labels"], D), dtype=dtype)
            np.add.at(dU, cache["chosen"], d_u)
            interact.embed_labels_backward(P, cfg, cache["lab"], dU, grads)

    encoder.backward(P, cfg, cache["enc"], d_hidden, d_pooled, grads)
    return grads


def _loss_terms(model, logits, y, mode, lam):
    v = model.variant
    aux, main = v.aux_task, v.main_task
    total = 0.0
    dlogits = {aux: None, main: None}
    if mode in ("joint", "main"):
        l_main, g = cross_entropy(logits[main], y[main])
        total += l_main
        dlogits[main] = g
    if mode in ("joint", "aux"):
        l_aux, g = cross_entropy(logits[aux], y[aux])
        weight = lam if mode == "joint" else 1.0
        total += weight * l_aux
        dlogits[aux] = g * weight
    return total, dlogits


def canonical_order(ids, y_bloom, y_diff):
    """Row order that depends only on batch contents, not arrival order."""
    keys = [y_diff, y_bloom] + [ids[:, j] for j in range(ids.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def crop(ids, mask):
    n = max(int(mask.sum(axis=1).max()), 1)
    return ids[:, :n], mask[:, :n]


def loss_and_grads(model, ids, mask, y_bloom, y_diff, lam=1.0, mode=None,
                   aux_choice=None, params=None, need_grad=True):
    """Mean batch loss and gradients for the model's variant.

    ``mode`` is ``joint`` (main + lam * aux), ``main`` or ``aux``; defaults to
    the variant's own objective.
    """
    mode = mode or model.variant.default_loss_mode
    y = {"bloom": np.asarray(y_bloom), "difficulty": np.asarray(y_diff)}
    gold = y[model.variant.aux_task] if model.variant is Variant.IA_GOLD else None
    logits, cache = forward_batch(model, ids, mask, gold_aux=gold, aux_choice=aux_choice,
                                  params=params)
    total, dlogits = _loss_terms(model, logits, y, mode, lam)
    if not need_grad:
        return total, None
    return total, backward_batch(model, cache, dlogits, params=params)


# --------------------------------------------------------------------------
# optimisation


class Adam:
    def __init__(self, lr=DESK_LR, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads, names):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in names:
            g = grads.get(k)
            if g is None:
                continue
            p = params[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def train_step(model, optimizer, ids, mask, y_bloom, y_diff, lam=1.0, mode=None):
    """One Adam update on a minibatch; returns the batch loss before the update."""
    ids, mask = crop(ids, mask)
    order = canonical_order(ids, y_bloom, y_diff)
    total, grads = loss_and_grads(
        model, ids[order], mask[order], np.asarray(y_bloom)[order], np.asarray(y_diff)[order],
        lam, mode,
    )
    if not np.isfinite(total):
        raise FloatingPointError("training loss is not finite")
    optimizer.step(model.params, grads, model.trainable())
    return total


def _required_labels(variant, has_aux_model):
    if variant is Variant.IA_FROZEN and has_aux_model:
        return ("difficulty",)
    return ("difficulty", "bloom")


def _check_labels(dataset, tasks):
    for i, rec in enumerate(dataset):
        for task in tasks:
            if rec.label(task) is None:
                raise DataError(f"record {i}: missing {task} label required for training")


def evaluate(model, dataset, lam=1.0, mode=None, batch_size=256, arrays=None):
    """Loss and per-task predictions over a labelled dataset."""
    ids, mask = arrays if arrays is not None else model.encode(dataset)
    yb = label_indices(dataset, "bloom", require=False)
    yd = label_indices(dataset, "difficulty", require=False)
    mode = mode or model.variant.default_loss_mode
    preds = {"bloom": [], "difficulty": []}
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        sl = slice(start, start + batch_size)
        bi, bm = crop(ids[sl], mask[sl])
        gold = yb[sl] if model.variant is Variant.IA_GOLD else None
        logits, _ = forward_batch(model, bi, bm, gold_aux=gold)
        y = {"bloom": yb[sl], "difficulty": yd[sl]}
        if (y["bloom"] >= 0).all() and (y["difficulty"] >= 0).all():
            part, _ = _loss_terms(model, logits, y, mode, lam)
            total += part * len(bi)
        for task in preds:
            preds[task].append(np.argmax(logits[task], axis=1))
    n = max(len(dataset), 1)
    out = {task: np.concatenate(p) if p else np.zeros(0, dtype=np.int64) for task, p in preds.items()}
    return total / n, out


def _metrics_row(model, dataset, preds):
    row = {}
    for task, key in (("difficulty", "diff"), ("bloom", "bloom")):
        y = label_indices(dataset, task, require=False)
        keep = y >= 0
        if keep.any():
            inv = model.labels(task)
            rep = classification_metrics(
                [inv[i] for i in y[keep]], [inv[i] for i in preds[task][keep]], inv
            )
            row[f"{key}_macro_f1"] = rep.macro["f1"]
    return row


def _run_phase(model, train, val, config, mode, phase, history, rng):
    ids, mask = model.encode(train)
    yb = label_indices(train, "bloom", require=False)
    yd = label_indices(train, "difficulty", require=False)
    val_arrays = model.encode(val) if val is not None and len(val) else None
    opt = Adam(config.lr, config.beta1, config.beta2, config.adam_eps)
    lam = config.aux_weight

    def record(epoch):
        row = {"phase": phase, "epoch": epoch}
        row["train_loss"], _ = evaluate(model, train, lam, mode, arrays=(ids, mask))
        if val_arrays is not None:
            row["val_loss"], preds = evaluate(model, val, lam, mode, arrays=val_arrays)
            row.update(_metrics_row(model, val, preds))
        history.append(row)
        log.info("phase=%s epoch=%d %s", phase, epoch,
                 " ".join(f"{k}={v:.4f}" for k, v in row.items() if isinstance(v, float)))

    record(0)
    n = len(train)
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            b = perm[start:start + config.batch_size]
            train_step(model, opt, ids[b], mask[b], yb[b], yd[b], lam, mode)
        record(epoch)


def train(model, train_set, val_set=None, config=None, aux_model=None):
    """Fit ``model`` in place; returns ``(model, history)``.

    History rows: phase, epoch, train_loss (full pass after the epoch; epoch 0
    is the untrained model), val_loss and validation macro-F1 per task.
    IA_FROZEN first trains (or takes) a Bloom-only model and freezes it;
    CASCADE fine-tunes on Bloom, then on difficulty.
    """
    config = config or TrainConfig()
    v = model.variant
    _check_labels(train_set, _required_labels(v, aux_model is not None))
    rng = np.random.default_rng([config.seed, 7919])
    history = []

    if v is Variant.IA_FROZEN:
        if aux_model is None:
            aux_model = QDiffModel.create(
                Variant.MULTITASK, train_set, model.encoder_config, seed=config.seed + 1,
                vocab=model.vocab, dtype=model.params["enc.tok_emb"].dtype,
            )
            _run_phase(aux_model, train_set, val_set, config, "aux", "aux", history, rng)
        for name, value in aux_model.params.items():
            if name.startswith("enc.") or name.startswith("head.bloom."):
                model.params["aux." + name] = value.copy()
        model.frozen = frozenset(k for k in model.params if k.startswith("aux."))
        _run_phase(model, train_set, val_set, config, "main", "main", history, rng)
    elif v is Variant.CASCADE:
        _run_phase(model, train_set, val_set, config, "aux", "aux", history, rng)
        _run_phase(model, train_set, val_set, config, "main", "main", history, rng)
    else:
        _run_phase(model, train_set, val_set, config, None, "joint", history, rng)
    return model, history


# --------------------------------------------------------------------------
# inference


@dataclass(frozen=True)
class Prediction:
    difficulty: str
    difficulty_probs: dict
    bloom: str
    bloom_probs: dict
    alpha: np.ndarray | None


def _softmax(logits):
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))


def predict_arrays(model, ids, mask, gold_aux=None):
    """Softmax distributions per task and attention weights for a batch."""
    ids, mask = crop(ids, mask)
    logits, cache = forward_batch(model, ids, mask, gold_aux=gold_aux)
    probs = {task: _softmax(logits[task]) for task in TASKS}
    return probs, cache.get("alpha")


def predict(model, question, answer=None, gold_aux=None, max_len=None):
    """Distributions and argmax labels for one question (alphabetical tie-break)."""
    cfg = model.encoder_config
    if max_len is not None and max_len > cfg.max_len:
        raise ValueError(f"max_len={max_len} exceeds the model's max_len={cfg.max_len}")
    seq = encode_input(model.vocab, question, answer, max_len or cfg.max_len)
    gold = None
    if model.variant is Variant.IA_GOLD:
        if gold_aux is None:
            raise ValueError("IA_GOLD needs the gold auxiliary label")
        gold = np.array([model.labels(model.variant.aux_task).index(gold_aux)])
    probs, alpha = predict_arrays(model, seq.ids[None], seq.mask[None], gold)
    out = {}
    for task in TASKS:
        inv = model.labels(task)
        p = probs[task][0]
        out[task] = (inv[int(np.argmax(p))], dict(zip(inv, p.tolist())))
    return Prediction(
        out["difficulty"][0], out["difficulty"][1], out["bloom"][0], out["bloom"][1],
        None if alpha is None else alpha[0, : seq.true_length].astype(np.float64),
    )
