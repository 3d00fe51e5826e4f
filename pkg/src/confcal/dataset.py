"""Multi-rater annotated datasets: ingestion, synthesis, splits.

A dataset is a line-delimited record file: one JSON header line with
``num_classes`` and ``feature_dim``, then one JSON record per sample with
``id``, ``features`` and per-class ``annotation_counts`` (rater votes).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

# Geometry of the synthetic generator: class centroids sit on a ring of this
# radius and clusters are isotropic with this standard deviation.
CENTROID_RADIUS = 2.0
CLUSTER_STD = 1.0


class DataFormatError(ValueError):
    """A record file violates the line-delimited dataset/sidecar format."""


@dataclass(frozen=True)
class AnnotatedSample:
    """One sample: feature vector plus per-class rater vote counts."""

    id: str
    features: np.ndarray
    annotation_counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "features", np.asarray(self.features, dtype=np.float64)
        )
        counts = np.asarray(self.annotation_counts, dtype=np.int64)
        object.__setattr__(self, "annotation_counts", counts)
        if counts.ndim != 1 or self.features.ndim != 1:
            raise ValueError(f"sample {self.id!r}: features and counts must be 1-D")
        if (counts < 0).any():
            raise ValueError(f"sample {self.id!r}: negative annotation count")
        if counts.sum() == 0:
            raise ValueError(f"sample {self.id!r} has no annotations")


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of samples sharing a class count and feature size."""

    samples: tuple[AnnotatedSample, ...]
    num_classes: int
    feature_dim: int

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ValueError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if s.features.shape[0] != self.feature_dim:
                raise ValueError(
                    f"sample {s.id!r} has {s.features.shape[0]} features, "
                    f"expected {self.feature_dim}"
                )
            if s.annotation_counts.shape[0] != self.num_classes:
                raise ValueError(
                    f"sample {s.id!r} has {s.annotation_counts.shape[0]} "
                    f"annotation counts, expected {self.num_classes}"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def feature_matrix(self) -> np.ndarray:
        """(n, feature_dim) float64 matrix in sample order."""
        return np.stack([s.features for s in self.samples])

    def modal_labels(self) -> np.ndarray:
        """(n,) int64 vector of modal annotation classes in sample order."""
        return np.array([modal_label(s) for s in self.samples], dtype=np.int64)

    def annotation_matrix(self) -> np.ndarray:
        """(n, num_classes) float64 matrix of annotation distributions."""
        return np.stack([annotation_distribution(s) for s in self.samples])


def annotation_distribution(sample: AnnotatedSample) -> np.ndarray:
    """Relative frequency of rater votes per class; sums to 1."""
    counts = sample.annotation_counts.astype(np.float64)
    return counts / counts.sum()


def modal_label(sample: AnnotatedSample) -> int:
    """Class with the most rater votes; ties go to the lowest class index."""
    return int(np.argmax(sample.annotation_counts))


def load_dataset(path) -> Dataset:
    """Parse a line-delimited dataset file.

    Raises DataFormatError with the offending 1-based line number on malformed
    input, and ValueError naming the sample when a record violates the header.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")

    header = _parse_line(path, 1, lines[0])
    if "num_classes" not in header or "feature_dim" not in header:
        raise DataFormatError(
            f"{path}: line 1: header must declare num_classes and feature_dim"
        )
    num_classes = int(header["num_classes"])
    feature_dim = int(header["feature_dim"])

    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = _parse_line(path, lineno, line)
        try:
            sample = AnnotatedSample(
                id=rec["id"],
                features=rec["features"],
                annotation_counts=rec["annotation_counts"],
            )
        except KeyError as exc:
            raise DataFormatError(
                f"{path}: line {lineno}: record missing field {exc.args[0]!r}"
            ) from None
        samples.append(sample)
    if not samples:
        raise DataFormatError(f"{path}: no sample records after header")
    return Dataset(tuple(samples), num_classes=num_classes, feature_dim=feature_dim)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the line-delimited format; round-trips bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "num_classes": dataset.num_classes,
                    "feature_dim": dataset.feature_dim,
                }
            )
            + "\n"
        )
        for s in dataset.samples:
            fh.write(
                json.dumps(
                    {
                        "id": s.id,
                        "features": [float(v) for v in s.features],
                        "annotation_counts": [int(c) for c in s.annotation_counts],
                    }
                )
                + "\n"
            )


def _parse_line(path, lineno: int, line: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {lineno}: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise DataFormatError(f"{path}: line {lineno}: record is not an object")
    return rec


def generate_synthetic(
    num_classes: int,
    samples_per_class: int,
    feature_dim: int,
    rater_count: int,
    noise: float,
    seed: int,
) -> Dataset:
    """Build a clustered dataset with simulated rater votes.

    Class centroids sit on a ring (a line for 1-D features) rotated by a
    seed-dependent angle; features are isotropic Gaussian around the true
    centroid. Each of ``rater_count`` raters votes the true class with
    probability ``1 - noise``, otherwise one of the other classes with
    probability proportional to inverse centroid distance. Identical
    arguments give bit-identical datasets.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    if rater_count < 1:
        raise ValueError("rater_count must be at least 1")
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be at least 1")
    if feature_dim < 1:
        raise ValueError("feature_dim must be at least 1")
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must be within [0, 1], got {noise}")

    rng = np.random.default_rng(seed)
    rotation = rng.uniform(0.0, 2.0 * math.pi)

    centroids = np.zeros((num_classes, feature_dim))
    if feature_dim == 1:
        centroids[:, 0] = np.linspace(-CENTROID_RADIUS, CENTROID_RADIUS, num_classes)
    else:
        angles = rotation + 2.0 * math.pi * np.arange(num_classes) / num_classes
        centroids[:, 0] = CENTROID_RADIUS * np.cos(angles)
        centroids[:, 1] = CENTROID_RADIUS * np.sin(angles)

    total = num_classes * samples_per_class
    true_class = np.repeat(np.arange(num_classes), samples_per_class)
    features = centroids[true_class] + CLUSTER_STD * rng.standard_normal(
        (total, feature_dim)
    )

    # Off-class vote distribution per true class, weighted by inverse
    # centroid distance so nearby classes are confused more often.
    confusion_cdf = np.empty((num_classes, num_classes - 1))
    off_classes = np.empty((num_classes, num_classes - 1), dtype=np.int64)
    for k in range(num_classes):
        others = np.array([j for j in range(num_classes) if j != k])
        dists = np.linalg.norm(centroids[others] - centroids[k], axis=1)
        weights = 1.0 / dists
        confusion_cdf[k] = np.cumsum(weights / weights.sum())
        off_classes[k] = others

    vote_is_true = rng.random((total, rater_count)) < (1.0 - noise)
    off_pick = rng.random((total, rater_count))
    votes = np.empty((total, rater_count), dtype=np.int64)
    for k in range(num_classes):
        rows = true_class == k
        idx = np.searchsorted(confusion_cdf[k], off_pick[rows], side="left")
        idx = np.minimum(idx, num_classes - 2)
        votes[rows] = np.where(vote_is_true[rows], k, off_classes[k][idx])

    counts = np.zeros((total, num_classes), dtype=np.int64)
    np.add.at(counts, (np.arange(total)[:, None], votes), 1)

    samples = tuple(
        AnnotatedSample(
            id=f"s{i:06d}", features=features[i], annotation_counts=counts[i]
        )
        for i in range(total)
    )
    return Dataset(samples, num_classes=num_classes, feature_dim=feature_dim)


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle deterministically by seed, then partition into train/test.

    The test part gets floor((1 - train_fraction) * n) samples but at least
    one; the train part gets the remainder. Raises if either part is empty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(dataset)
    # epsilon absorbs float representation error so the floor matches the
    # real-number value (e.g. (1-0.8)*10 == 1.9999... must floor to 2)
    test_count = max(1, math.floor((1.0 - train_fraction) * n + 1e-9))
    train_count = n - test_count
    if train_count < 1:
        raise ValueError(
            f"train_fraction {train_fraction} leaves no training samples for n={n}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train = tuple(dataset.samples[i] for i in perm[:train_count])
    test = tuple(dataset.samples[i] for i in perm[train_count:])

    def make(part):
        return Dataset(
            part, num_classes=dataset.num_classes, feature_dim=dataset.feature_dim
        )

    return make(train), make(test)
