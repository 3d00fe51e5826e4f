"""Per-sample confidence: human rater agreement and model probability.

Human confidence is the population standard deviation of a sample's
annotation distribution (peaked agreement scores high, uniform disagreement
scores zero) alongside the distribution itself. Model confidence is a frozen
baseline classifier's probability at the sample's modal label alongside its
full softmax vector. Tables persist as line-delimited JSON sidecars keyed by
sample id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import DataFormatError, Dataset, annotation_distribution
from .smoothing import check_simplex

KINDS = ("human", "model")

_SCALAR_SLACK = 1e-9


def sigma_max(num_classes: int) -> float:
    """Largest possible annotation-spread scalar: sqrt(N - 1) / N."""
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    return math.sqrt(num_classes - 1) / num_classes


@dataclass(frozen=True)
class ConfidenceEntry:
    """One sample's confidence vector (a distribution) and scalar score."""

    id: str
    vector: np.ndarray
    scalar: float

    def __post_init__(self):
        object.__setattr__(self, "vector", check_simplex(self.vector, f"entry {self.id!r} vector"))
        object.__setattr__(self, "scalar", float(self.scalar))


@dataclass(frozen=True)
class ConfidenceTable:
    """Ordered id -> entry map of one confidence kind."""

    kind: str
    num_classes: int
    entries: dict

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        hi = _scalar_upper(self.kind, self.num_classes)
        for entry in self.entries.values():
            if entry.vector.shape[0] != self.num_classes:
                raise ValueError(
                    f"entry {entry.id!r} vector has length {entry.vector.shape[0]}, "
                    f"expected {self.num_classes}"
                )
            if not -_SCALAR_SLACK <= entry.scalar <= hi + _SCALAR_SLACK:
                raise ValueError(
                    f"entry {entry.id!r} scalar {entry.scalar} outside [0, {hi}]"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def aligned_to(self, dataset: Dataset):
        """(n, N) vectors and (n,) scalars in dataset sample order.

        Raises KeyError naming the first dataset id the table does not cover.
        """
        if dataset.num_classes != self.num_classes:
            raise ValueError(
                f"table has {self.num_classes} classes, dataset has {dataset.num_classes}"
            )
        vectors = np.empty((len(dataset), self.num_classes))
        scalars = np.empty(len(dataset))
        for i, sample in enumerate(dataset.samples):
            entry = self.entries.get(sample.id)
            if entry is None:
                raise KeyError(f"confidence table has no entry for sample id {sample.id!r}")
            vectors[i] = entry.vector
            scalars[i] = entry.scalar
        return vectors, scalars


def _scalar_upper(kind: str, num_classes: int) -> float:
    return 1.0 if kind == "model" else sigma_max(num_classes)


def human_confidence_scalar(distribution: np.ndarray) -> float:
    """Population standard deviation of an annotation distribution.

    Zero for uniform disagreement; sqrt(N - 1) / N for unanimous agreement.
    """
    distribution = check_simplex(distribution, "distribution")
    return float(kernels.population_std_rows(distribution[None, :])[0])


def human_confidence_table(dataset: Dataset) -> ConfidenceTable:
    """Annotation distribution plus its spread scalar for every sample."""
    entries = {}
    for sample in dataset.samples:
        dist = annotation_distribution(sample)
        entries[sample.id] = ConfidenceEntry(
            id=sample.id,
            vector=dist,
            scalar=float(kernels.population_std_rows(dist[None, :])[0]),
        )
    return ConfidenceTable(kind="human", num_classes=dataset.num_classes, entries=entries)


def precompute_model_confidence(model, dataset: Dataset) -> ConfidenceTable:
    """Baseline softmax vector plus its probability at the modal label.

    The model is treated as frozen: this reads predictions once and the
    resulting table is reused verbatim for smoothing and gating.
    """
    from .trainer import predict_proba

    if dataset.feature_dim != model.dims[0] or dataset.num_classes != model.dims[-1]:
        raise ValueError(
            f"model dims {model.dims} do not match dataset "
            f"({dataset.feature_dim} features, {dataset.num_classes} classes)"
        )
    probs = predict_proba(model, dataset.feature_matrix())
    labels = dataset.modal_labels()
    entries = {}
    for i, sample in enumerate(dataset.samples):
        entries[sample.id] = ConfidenceEntry(
            id=sample.id,
            vector=probs[i],
            scalar=float(probs[i, labels[i]]),
        )
    return ConfidenceTable(kind="model", num_classes=dataset.num_classes, entries=entries)


def save_table(table: ConfidenceTable, path) -> None:
    """Line-delimited sidecar: a kind/num_classes header, then one entry per
    line. Floats round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": table.kind, "num_classes": table.num_classes}) + "\n")
        for entry in table.entries.values():
            fh.write(
                json.dumps(
                    {
                        "id": entry.id,
                        "vector": [float(v) for v in entry.vector],
                        "scalar": float(entry.scalar),
                    }
                )
                + "\n"
            )


def load_table(path) -> ConfidenceTable:
    """Parse a sidecar; malformed lines raise with their 1-based number."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty sidecar file")
    header = _parse_obj(path, 1, lines[0])
    if "kind" not in header or "num_classes" not in header:
        raise DataFormatError(f"{path}: line 1: header must declare kind and num_classes")
    entries = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = _parse_obj(path, lineno, line)
        try:
            entry = ConfidenceEntry(
                id=rec["id"], vector=np.asarray(rec["vector"], dtype=np.float64),
                scalar=rec["scalar"],
            )
        except KeyError as exc:
            raise DataFormatError(
                f"{path}: line {lineno}: entry missing field {exc.args[0]!r}"
            ) from None
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
        if entry.id in entries:
            raise DataFormatError(f"{path}: line {lineno}: duplicate id {entry.id!r}")
        entries[entry.id] = entry
    try:
        return ConfidenceTable(
            kind=header["kind"], num_classes=int(header["num_classes"]), entries=entries
        )
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def _parse_obj(path, lineno: int, line: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: line {lineno}: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise DataFormatError(f"{path}: line {lineno}: record is not an object")
    return rec
