"""Calibration evaluation: top-1 accuracy, ECE, reliability diagrams.

Confidence is the predicted distribution's maximum probability. The unit
interval splits into equal-width bins, half-open (lower, upper] except that
confidence 0 lands in the first bin; expected calibration error is the
bin-count-weighted mean absolute gap between accuracy and confidence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import DataFormatError

DEFAULT_BINS = 15


@dataclass(frozen=True)
class BinStats:
    """One reliability bin; averages are None when the bin is empty."""

    lower: float
    upper: float
    count: int
    avg_confidence: float | None
    avg_accuracy: float | None


@dataclass(frozen=True)
class CalibrationReport:
    num_bins: int
    n: int
    accuracy: float
    ece: float
    bins: tuple[BinStats, ...]


def _check_inputs(probabilities, labels):
    probs = np.ascontiguousarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("probabilities must be a non-empty (n, num_classes) matrix")
    if labels.shape != (probs.shape[0],):
        raise ValueError(
            f"labels shape {labels.shape} does not match {probs.shape[0]} predictions"
        )
    if (labels < 0).any() or (labels >= probs.shape[1]).any():
        raise ValueError("labels out of range for the class count")
    return probs, labels


def top1_accuracy(probabilities, labels) -> float:
    """Fraction of samples whose argmax class equals the label."""
    probs, labels = _check_inputs(probabilities, labels)
    preds = kernels.row_argmax(probs)
    return float(np.count_nonzero(preds == labels)) / probs.shape[0]


def reliability_bins(probabilities, labels, num_bins: int = DEFAULT_BINS):
    """Equal-width confidence bins with per-bin count and averages."""
    probs, labels = _check_inputs(probabilities, labels)
    if num_bins < 1:
        raise ValueError(f"num_bins must be at least 1, got {num_bins}")
    conf = kernels.row_max(probs)
    correct = (kernels.row_argmax(probs) == labels).astype(np.float64)
    idx = kernels.bin_index_rows(conf, num_bins)
    counts = np.bincount(idx, minlength=num_bins)
    conf_sums = np.bincount(idx, weights=conf, minlength=num_bins)
    correct_sums = np.bincount(idx, weights=correct, minlength=num_bins)
    bins = []
    for m in range(num_bins):
        count = int(counts[m])
        bins.append(
            BinStats(
                lower=m / num_bins,
                upper=(m + 1) / num_bins,
                count=count,
                avg_confidence=conf_sums[m] / count if count else None,
                avg_accuracy=correct_sums[m] / count if count else None,
            )
        )
    return tuple(bins)


def ece_from_bins(bins, n: int) -> float:
    """Count-weighted mean |accuracy - confidence| over non-empty bins."""
    if n <= 0:
        raise ValueError("n must be positive")
    total = 0.0
    for b in bins:
        if b.count:
            total += (b.count / n) * abs(b.avg_accuracy - b.avg_confidence)
    return total


def ece(probabilities, labels, num_bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error of a batch of predictions."""
    bins = reliability_bins(probabilities, labels, num_bins)
    return ece_from_bins(bins, np.asarray(labels).shape[0])


def make_report(probabilities, labels, num_bins: int = DEFAULT_BINS) -> CalibrationReport:
    probs, labels = _check_inputs(probabilities, labels)
    bins = reliability_bins(probs, labels, num_bins)
    return CalibrationReport(
        num_bins=num_bins,
        n=probs.shape[0],
        accuracy=top1_accuracy(probs, labels),
        ece=ece_from_bins(bins, probs.shape[0]),
        bins=bins,
    )


def reliability_export(bins, path) -> None:
    """CSV with one row per bin; empty bins leave the average fields empty."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lower,upper,count,avg_confidence,avg_accuracy\n")
        for b in bins:
            conf = repr(float(b.avg_confidence)) if b.count else ""
            acc = repr(float(b.avg_accuracy)) if b.count else ""
            fh.write(f"{repr(float(b.lower))},{repr(float(b.upper))},{b.count},{conf},{acc}\n")


def load_reliability(path):
    """Parse the CSV back into BinStats; round-trips bit-exactly."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "lower,upper,count,avg_confidence,avg_accuracy":
        raise DataFormatError(f"{path}: missing reliability header")
    bins = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise DataFormatError(f"{path}: line {lineno}: expected 5 fields")
        try:
            count = int(parts[2])
            bins.append(
                BinStats(
                    lower=float(parts[0]),
                    upper=float(parts[1]),
                    count=count,
                    avg_confidence=float(parts[3]) if parts[3] else None,
                    avg_accuracy=float(parts[4]) if parts[4] else None,
                )
            )
        except ValueError:
            raise DataFormatError(f"{path}: line {lineno}: non-numeric field") from None
    return tuple(bins)


def save_report(report: CalibrationReport, path) -> None:
    """Single JSON object with scalar metrics and the bin table."""
    payload = {
        "num_bins": report.num_bins,
        "n": report.n,
        "accuracy": report.accuracy,
        "ece": report.ece,
        "bins": [
            {
                "lower": b.lower,
                "upper": b.upper,
                "count": b.count,
                "avg_confidence": b.avg_confidence,
                "avg_accuracy": b.avg_accuracy,
            }
            for b in report.bins
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_report(path) -> CalibrationReport:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: {exc.msg}") from None
    try:
        bins = tuple(
            BinStats(
                lower=float(b["lower"]),
                upper=float(b["upper"]),
                count=int(b["count"]),
                avg_confidence=None if b["avg_confidence"] is None else float(b["avg_confidence"]),
                avg_accuracy=None if b["avg_accuracy"] is None else float(b["avg_accuracy"]),
            )
            for b in payload["bins"]
        )
        return CalibrationReport(
            num_bins=int(payload["num_bins"]),
            n=int(payload["n"]),
            accuracy=float(payload["accuracy"]),
            ece=float(payload["ece"]),
            bins=bins,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad report payload ({exc})") from None
