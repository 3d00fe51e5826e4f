"""Pure-numpy reference implementations of the per-batch kernels.

Every function here has a loop-style twin in ``_kernels_numba``; the two
backends agree to float rounding (see tests/test_kernels.py). All inputs are
expected to be C-contiguous float64 arrays.
"""

import numpy as np

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


def affine(h, w, b):
    """Dense layer pre-activation: ``h @ w + b``."""
    return h @ w + b


def relu(z):
    return np.maximum(z, 0.0)


def relu_backward(dh, z):
    """Gradient through relu: pass where the pre-activation was positive."""
    return dh * (z > 0.0)


def softmax_rows(z):
    """Row-wise softmax with max subtraction for numerical stability."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def soft_ce_rows(t, p):
    """Per-row cross-entropy -sum(t * log(p)), p clamped below at LOG_EPS."""
    return -(t * np.log(np.maximum(p, LOG_EPS))).sum(axis=1)


def softmax_ce_delta(p, t, row_weights):
    """Output-layer gradient of weighted soft-target CE through softmax.

    ``row_weights`` carries the per-sample factor (0 for gated-out samples,
    1/denominator for included ones), so the result is ready to backpropagate.
    """
    return (p - t) * row_weights[:, None]


def affine_backward(h_prev, dz, w):
    """Backprop through a dense layer: returns (dw, db, dh_prev)."""
    dw = h_prev.T @ dz
    db = dz.sum(axis=0)
    dh_prev = dz @ w.T
    return dw, db, dh_prev


def smooth_rows_uniform(p, alpha):
    """Blend each target row toward uniform: ``p*(1-alpha) + alpha/N``."""
    n = p.shape[1]
    return p * (1.0 - alpha) + alpha / n


def smooth_rows_confidence(p, c, alpha, gamma):
    """Blend each target row by per-class factors ``alpha + gamma*c``.

    Factors are clamped to [0, 1]; rows are renormalized because per-class
    factors do not preserve the unit sum.
    """
    n = p.shape[1]
    factors = np.clip(alpha + gamma * c, 0.0, 1.0)
    raw = p * (1.0 - factors) + factors / n
    return raw / raw.sum(axis=1, keepdims=True)


def row_max(p):
    return p.max(axis=1)


def row_argmax(p):
    """First index attaining the row maximum (lowest-index tie-break)."""
    return p.argmax(axis=1).astype(np.int64)


def bin_index_rows(conf, m):
    """0-based index of the half-open bin ((k-1)/m, k/m] holding each value.

    A confidence of exactly 0 lands in the first bin.
    """
    idx = np.ceil(conf * m).astype(np.int64) - 1
    return np.clip(idx, 0, m - 1)


def population_std_rows(d):
    """Population (1/N) standard deviation of each row."""
    mean = d.mean(axis=1, keepdims=True)
    return np.sqrt(np.mean((d - mean) ** 2, axis=1))
