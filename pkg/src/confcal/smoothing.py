"""Label smoothing targets and the soft cross-entropy loss.

Uniform smoothing blends a target distribution toward uniform with a global
weight. The confidence-aware variants grow that weight per sample from a
confidence score, then renormalize: easy samples get softer targets, hard
ones stay close to their original distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

SIMPLEX_ATOL = 1e-9


@dataclass(frozen=True)
class SmoothingConfig:
    """Base smoothing weight and per-sample confidence gain."""

    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")


def check_simplex(vec: np.ndarray, name: str = "vector") -> np.ndarray:
    """Validate a probability vector: non-negative, sums to 1 within 1e-9."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if (vec < 0.0).any():
        raise ValueError(f"{name} has negative entries")
    total = float(vec.sum())
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise ValueError(f"{name} sums to {total}, not 1")
    return vec


def one_hot(index: int, num_classes: int) -> np.ndarray:
    """Degenerate distribution with all mass at one class."""
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    if not 0 <= index < num_classes:
        raise ValueError(f"index {index} out of range for {num_classes} classes")
    vec = np.zeros(num_classes)
    vec[index] = 1.0
    return vec


def uniform_smooth(target: np.ndarray, alpha: float) -> np.ndarray:
    """target * (1 - alpha) + alpha / num_classes, per entry."""
    target = check_simplex(target, "target")
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    return kernels.smooth_rows_uniform(target[None, :], alpha)[0]


def mc_smooth(target: np.ndarray, model_conf: np.ndarray, cfg: SmoothingConfig) -> np.ndarray:
    """Confidence-aware smoothing driven by a model probability vector."""
    return _confidence_smooth(target, model_conf, cfg, "model confidence")


def hc_smooth(target: np.ndarray, human_conf: np.ndarray, cfg: SmoothingConfig) -> np.ndarray:
    """Confidence-aware smoothing driven by an annotation distribution."""
    return _confidence_smooth(target, human_conf, cfg, "human confidence")


def _confidence_smooth(target, conf, cfg: SmoothingConfig, conf_name: str) -> np.ndarray:
    target = check_simplex(target, "target")
    conf = check_simplex(conf, conf_name)
    if conf.shape != target.shape:
        raise ValueError(
            f"{conf_name} has length {conf.shape[0]}, target has {target.shape[0]}"
        )
    return smoothed_targets(target[None, :], conf[None, :], cfg.alpha, cfg.gamma)[0]


def smoothed_targets(
    target_rows: np.ndarray, conf_rows: np.ndarray, alpha: float, gamma: float
) -> np.ndarray:
    """Batch confidence-aware smoothing.

    gamma == 0 delegates to the uniform kernel so the reduction to plain
    smoothing is exact, not merely within rounding.
    """
    if gamma == 0.0:
        return kernels.smooth_rows_uniform(target_rows, alpha)
    return kernels.smooth_rows_confidence(target_rows, conf_rows, alpha, gamma)


def cross_entropy(target: np.ndarray, predicted: np.ndarray) -> float:
    """-sum(target * log(predicted)) with predictions floored at 1e-12."""
    target = check_simplex(target, "target")
    predicted = np.asarray(predicted, dtype=np.float64)
    if predicted.shape != target.shape:
        raise ValueError(
            f"predicted has length {predicted.shape[0]}, target has {target.shape[0]}"
        )
    if (predicted < 0.0).any():
        raise ValueError("predicted has negative entries")
    return float(kernels.soft_ce_rows(target[None, :], predicted[None, :])[0])
