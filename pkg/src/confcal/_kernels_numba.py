"""Numba-jitted loop implementations of the per-batch kernels.

Same signatures and semantics as ``_kernels_numpy``. Loops are written
single-threaded with a fixed accumulation order so repeat runs on this
backend are bit-for-bit reproducible.
"""

import numpy as np
from numba import njit

LOG_EPS = 1e-12

__all__ = [
    "LOG_EPS",
    "affine",
    "affine_backward",
    "bin_index_rows",
    "population_std_rows",
    "relu",
    "relu_backward",
    "row_argmax",
    "row_max",
    "smooth_rows_confidence",
    "smooth_rows_uniform",
    "soft_ce_rows",
    "softmax_ce_delta",
    "softmax_rows",
]


@njit(cache=True)
def affine(h, w, b):
    z = h @ w
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] += b[j]
    return z


@njit(cache=True)
def relu(z):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            v = z[i, j]
            out[i, j] = v if v > 0.0 else 0.0
    return out


@njit(cache=True)
def relu_backward(dh, z):
    out = np.empty_like(dh)
    for i in range(dh.shape[0]):
        for j in range(dh.shape[1]):
            out[i, j] = dh[i, j] if z[i, j] > 0.0 else 0.0
    return out


@njit(cache=True)
def softmax_rows(z):
    rows, cols = z.shape
    out = np.empty((rows, cols))
    for i in range(rows):
        hi = z[i, 0]
        for j in range(1, cols):
            if z[i, j] > hi:
                hi = z[i, j]
        total = 0.0
        for j in range(cols):
            e = np.exp(z[i, j] - hi)
            out[i, j] = e
            total += e
        for j in range(cols):
            out[i, j] /= total
    return out


@njit(cache=True)
def soft_ce_rows(t, p):
    rows, cols = t.shape
    out = np.empty(rows)
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            pj = p[i, j]
            if pj < LOG_EPS:
                pj = LOG_EPS
            acc -= t[i, j] * np.log(pj)
        out[i] = acc
    return out


@njit(cache=True)
def softmax_ce_delta(p, t, row_weights):
    rows, cols = p.shape
    out = np.empty((rows, cols))
    for i in range(rows):
        w = row_weights[i]
        for j in range(cols):
            out[i, j] = (p[i, j] - t[i, j]) * w
    return out


@njit(cache=True)
def affine_backward(h_prev, dz, w):
    dw = h_prev.T.copy() @ dz
    db = np.zeros(dz.shape[1])
    for i in range(dz.shape[0]):
        for j in range(dz.shape[1]):
            db[j] += dz[i, j]
    dh_prev = dz @ w.T.copy()
    return dw, db, dh_prev


@njit(cache=True)
def smooth_rows_uniform(p, alpha):
    rows, cols = p.shape
    out = np.empty((rows, cols))
    base = alpha / cols
    keep = 1.0 - alpha
    for i in range(rows):
        for j in range(cols):
            out[i, j] = p[i, j] * keep + base
    return out


@njit(cache=True)
def smooth_rows_confidence(p, c, alpha, gamma):
    rows, cols = p.shape
    out = np.empty((rows, cols))
    for i in range(rows):
        total = 0.0
        for j in range(cols):
            f = alpha + gamma * c[i, j]
            if f < 0.0:
                f = 0.0
            elif f > 1.0:
                f = 1.0
            raw = p[i, j] * (1.0 - f) + f / cols
            out[i, j] = raw
            total += raw
        for j in range(cols):
            out[i, j] /= total
    return out


@njit(cache=True)
def row_max(p):
    rows = p.shape[0]
    out = np.empty(rows)
    for i in range(rows):
        hi = p[i, 0]
        for j in range(1, p.shape[1]):
            if p[i, j] > hi:
                hi = p[i, j]
        out[i] = hi
    return out


@njit(cache=True)
def row_argmax(p):
    rows = p.shape[0]
    out = np.empty(rows, dtype=np.int64)
    for i in range(rows):
        best = 0
        hi = p[i, 0]
        for j in range(1, p.shape[1]):
            if p[i, j] > hi:
                hi = p[i, j]
                best = j
        out[i] = best
    return out


@njit(cache=True)
def bin_index_rows(conf, m):
    out = np.empty(conf.shape[0], dtype=np.int64)
    for i in range(conf.shape[0]):
        idx = int(np.ceil(conf[i] * m)) - 1
        if idx < 0:
            idx = 0
        elif idx > m - 1:
            idx = m - 1
        out[i] = idx
    return out


@njit(cache=True)
def population_std_rows(d):
    rows, cols = d.shape
    out = np.empty(rows)
    for i in range(rows):
        mean = 0.0
        for j in range(cols):
            mean += d[i, j]
        mean /= cols
        var = 0.0
        for j in range(cols):
            dev = d[i, j] - mean
            var += dev * dev
        out[i] = np.sqrt(var / cols)
    return out
