"""numba twins of the reference kernels in ``_numpy``."""

import math

import numpy as np
from numba import njit

JIT_OPTIONS = {"nogil": True, "cache": True}

GELU_C = math.sqrt(2.0 / math.pi)
GELU_K = 0.044715


@njit(**JIT_OPTIONS)
def masked_softmax(scores, mask):
    rows, cols = scores.shape
    out = np.zeros_like(scores)
    for r in range(rows):
        top = -np.inf
        for c in range(cols):
            if mask[r, c] > 0 and scores[r, c] > top:
                top = scores[r, c]
        if top == -np.inf:
            continue
        z = 0.0
        for c in range(cols):
            if mask[r, c] > 0:
                e = math.exp(scores[r, c] - top)
                out[r, c] = e
                z += e
        for c in range(cols):
            out[r, c] = out[r, c] / z
    return out


@njit(**JIT_OPTIONS)
def masked_softmax_backward(probs, dprobs):
    rows, cols = probs.shape
    out = np.empty_like(probs)
    for r in range(rows):
        dot = 0.0
        for c in range(cols):
            dot += probs[r, c] * dprobs[r, c]
        for c in range(cols):
            out[r, c] = probs[r, c] * (dprobs[r, c] - dot)
    return out


@njit(**JIT_OPTIONS)
def layernorm(x, gamma, beta, eps):
    rows, cols = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    inv_std = np.empty(rows, dtype=x.dtype)
    for r in range(rows):
        mu = 0.0
        for c in range(cols):
            mu += x[r, c]
        mu /= cols
        var = 0.0
        for c in range(cols):
            d = x[r, c] - mu
            var += d * d
        var /= cols
        s = 1.0 / math.sqrt(var + eps)
        inv_std[r] = s
        for c in range(cols):
            h = (x[r, c] - mu) * s
            xhat[r, c] = h
            y[r, c] = h * gamma[c] + beta[c]
    return y, xhat, inv_std


@njit(**JIT_OPTIONS)
def layernorm_backward(dy, xhat, inv_std, gamma):
    rows, cols = dy.shape
    dx = np.empty_like(dy)
    dgamma = np.zeros(cols, dtype=dy.dtype)
    dbeta = np.zeros(cols, dtype=dy.dtype)
    for r in range(rows):
        m1 = 0.0
        m2 = 0.0
        for c in range(cols):
            g = dy[r, c] * gamma[c]
            m1 += g
            m2 += g * xhat[r, c]
            dgamma[c] += dy[r, c] * xhat[r, c]
            dbeta[c] += dy[r, c]
        m1 /= cols
        m2 /= cols
        for c in range(cols):
            dx[r, c] = (dy[r, c] * gamma[c] - m1 - xhat[r, c] * m2) * inv_std[r]
    return dx, dgamma, dbeta


@njit(**JIT_OPTIONS)
def _gelu_flat(x):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        t = math.tanh(GELU_C * (v + GELU_K * v * v * v))
        out[i] = 0.5 * v * (1.0 + t)
    return out


@njit(**JIT_OPTIONS)
def _gelu_backward_flat(x, dy):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        t = math.tanh(GELU_C * (v + GELU_K * v * v * v))
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v)
        out[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * dt)
    return out


def gelu(x):
    return _gelu_flat(np.ascontiguousarray(x).ravel()).reshape(x.shape)


def gelu_backward(x, dy):
    flat = _gelu_backward_flat(
        np.ascontiguousarray(x).ravel(), np.ascontiguousarray(dy).ravel()
    )
    return flat.reshape(x.shape)


@njit(**JIT_OPTIONS)
def pegasos_epochs(X, y, order, lam, w, w_sum, t0):
    n_feat = X.shape[1]
    radius2 = 1.0 / lam
    t = t0
    for k in range(order.shape[0]):
        i = order[k]
        t += 1
        eta = 1.0 / (lam * t)
        dot = 0.0
        for j in range(n_feat):
            dot += X[i, j] * w[j]
        margin = y[i] * dot
        shrink = 1.0 - eta * lam
        if margin < 1.0:
            step = eta * y[i]
            for j in range(n_feat):
                w[j] = w[j] * shrink + step * X[i, j]
        else:
            for j in range(n_feat):
                w[j] *= shrink
        sq = 0.0
        for j in range(n_feat):
            sq += w[j] * w[j]
        if sq > radius2:
            scale = np.sqrt(radius2 / sq)
            for j in range(n_feat):
                w[j] *= scale
        for j in range(n_feat):
            w_sum[j] += w[j]
    return t


@njit(**JIT_OPTIONS)
def bootstrap_mean_diffs(diff, idx):
    reps, n = idx.shape
    out = np.empty(reps, dtype=np.float64)
    for r in range(reps):
        s = 0.0
        for k in range(n):
            s += diff[idx[r, k]]
        out[r] = s / n
    return out
