"""Pure-numpy reference kernels.

Every function here has a twin in ``_numba`` with the same signature. These
are the semantics of record; the numba versions are checked against them.
"""

import numpy as np

GELU_C = np.sqrt(2.0 / np.pi)
GELU_K = 0.044715


def masked_softmax(scores, mask):
    """Row-wise softmax over the last axis of a 2-D array.

    Entries with ``mask == 0`` get exactly zero weight. A row with no
    unmasked entry comes back all zero.
    """
    keep = mask > 0
    shifted = np.where(keep, scores, -np.inf)
    top = shifted.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(keep, np.exp(scores - top), 0.0)
    z = e.sum(axis=1, keepdims=True)
    z = np.where(z > 0, z, 1.0)
    return (e / z).astype(scores.dtype, copy=False)


def masked_softmax_backward(probs, dprobs):
    dot = (probs * dprobs).sum(axis=1, keepdims=True)
    return probs * (dprobs - dot)


def layernorm(x, gamma, beta, eps):
    """Returns (y, xhat, inv_std) for 2-D ``x`` normalised over columns."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    return xhat * gamma + beta, xhat, inv_std[:, 0]


def layernorm_backward(dy, xhat, inv_std, gamma):
    """Returns (dx, dgamma, dbeta)."""
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * inv_std[:, None]
    return dx, dgamma, dbeta


def gelu(x):
    t = np.tanh(GELU_C * (x + GELU_K * x * x * x))
    return 0.5 * x * (1.0 + t)


def gelu_backward(x, dy):
    t = np.tanh(GELU_C * (x + GELU_K * x * x * x))
    dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


def pegasos_epochs(X, y, order, lam, w, w_sum, t0):
    """Stochastic subgradient passes of the hinge + L2 objective.

    ``y`` is +/-1, ``order`` the flat visiting sequence of row indices.
    Step size at global step t is 1/(lam*t); after each step ``w`` is
    projected onto the ball of radius 1/sqrt(lam), which contains the
    optimum. ``w`` and the running iterate sum ``w_sum`` are updated in
    place; ``t0`` is the number of steps already taken. Returns the new
    step count.
    """
    t = t0
    radius2 = 1.0 / lam
    for i in order:
        t += 1
        eta = 1.0 / (lam * t)
        margin = y[i] * (X[i] @ w)
        w *= 1.0 - eta * lam
        if margin < 1.0:
            w += (eta * y[i]) * X[i]
        sq = w @ w
        if sq > radius2:
            w *= np.sqrt(radius2 / sq)
        w_sum += w
    return t


def bootstrap_mean_diffs(diff, idx):
    """Mean of ``diff`` over each row of resample indices ``idx``."""
    return diff[idx].mean(axis=1)
