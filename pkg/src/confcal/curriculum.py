"""Confidence-ranked curriculum: threshold schedule and loss gating.

Training starts with only the most confident samples included and lowers the
inclusion threshold linearly to zero over a fixed number of epochs, after
which every sample participates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

_CRITERIA = ("model", "human")


@dataclass(frozen=True)
class CurriculumSchedule:
    """Threshold state for confidence-gated training.

    mu is the current inclusion threshold, beta the per-epoch decrement, and
    end_epoch the epoch index at which mu reaches exactly zero.
    """

    mu_initial: float
    beta: float
    end_epoch: int
    r: float
    criterion: str
    mu: float
    epochs_advanced: int = 0

    def __post_init__(self):
        if self.criterion not in _CRITERIA:
            raise ValueError(f"criterion must be one of {_CRITERIA}, got {self.criterion!r}")
        if self.end_epoch < 1:
            raise ValueError(f"end_epoch must be at least 1, got {self.end_epoch}")
        if not 0.0 < self.r <= 1.0:
            raise ValueError(f"r must be in (0, 1], got {self.r}")
        if abs(self.beta - self.mu_initial / self.end_epoch) > 1e-12:
            raise ValueError("beta must equal mu_initial / end_epoch")


def make_schedule(scores, r: float, end_epoch: int, criterion: str) -> CurriculumSchedule:
    """Build the schedule from the training pool's confidence scores."""
    mu0 = initial_threshold(scores, r)
    beta = update_factor(mu0, end_epoch)
    return CurriculumSchedule(
        mu_initial=mu0, beta=beta, end_epoch=end_epoch, r=r, criterion=criterion, mu=mu0
    )


def initial_threshold(scores, r: float) -> float:
    """Score at descending rank ceil(r * n); ties at the cut are included.

    With r = 1 the threshold is the minimum score, so every sample passes
    from the first epoch.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] == 0:
        raise ValueError("scores must be a non-empty 1-D array")
    if not 0.0 < r <= 1.0:
        raise ValueError(f"r must be in (0, 1], got {r}")
    n = scores.shape[0]
    # epsilon keeps the ceil at the real-number value when r * n lands a
    # hair above an integer in floats
    k = min(n, max(1, math.ceil(r * n - 1e-9)))
    ordered = np.sort(scores)[::-1]
    return float(ordered[k - 1])


def update_factor(mu_initial: float, end_epoch: int) -> float:
    """Per-epoch threshold decrement: mu_initial / end_epoch."""
    if end_epoch < 1:
        raise ValueError(f"end_epoch must be at least 1, got {end_epoch}")
    if mu_initial < 0.0:
        raise ValueError(f"mu_initial must be non-negative, got {mu_initial}")
    return mu_initial / end_epoch


def advance(schedule: CurriculumSchedule) -> CurriculumSchedule:
    """One epoch-boundary step: mu <- max(mu - beta, 0).

    Once end_epoch steps have been taken the threshold is pinned to exactly
    0.0; repeated subtraction can leave sub-epsilon residue that would wrongly
    exclude zero-score samples.
    """
    advanced = schedule.epochs_advanced + 1
    if advanced >= schedule.end_epoch:
        mu = 0.0
    else:
        mu = max(schedule.mu - schedule.beta, 0.0)
    return replace(schedule, mu=mu, epochs_advanced=advanced)


def gate_loss(sample_loss: float, score: float, mu: float) -> float:
    """Zero out the loss of samples below the threshold; ties pass."""
    return sample_loss if score >= mu else 0.0


def inclusion_mask(scores: np.ndarray, mu: float) -> np.ndarray:
    """Boolean mask of samples at or above the threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    return scores >= mu


def included_fraction(scores, mu: float) -> float:
    """Fraction of the pool at or above the threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] == 0:
        raise ValueError("scores must be a non-empty 1-D array")
    return float(np.count_nonzero(scores >= mu)) / scores.shape[0]
