"""Feed-forward softmax classifier trained with minibatch SGD and momentum.

The network is [feature_dim, *hidden, num_classes] with ReLU hidden layers
and a softmax head trained against soft cross-entropy targets. Curriculum
gating zeroes the loss (and gradient) of samples below the confidence
threshold; an ungated run uses the same code path with an all-true mask so
the two are arithmetically identical when every sample passes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import curriculum as _curriculum
from . import kernels
from .dataset import DataFormatError, Dataset
from .smoothing import SmoothingConfig, smoothed_targets

LOSS_KINDS = ("ce", "ls", "mcls", "hcls")
STRATEGIES = ("iid", "mccl", "hccl")

# stream separators so model init and epoch shuffles never share a seed
_INIT_SALT = 101
_SHUFFLE_SALT = 202


class TrainingDivergedError(RuntimeError):
    """Training produced non-finite loss or parameters."""


@dataclass
class ModelParams:
    """Layer sizes plus weight and bias arrays, mutated in place by SGD."""

    dims: tuple[int, ...]
    weights: list
    biases: list

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) < 2:
            raise ValueError("dims needs at least an input and an output size")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"layer sizes must be positive, got {self.dims}")
        if len(self.weights) != len(self.dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("weights/biases do not match dims")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.dims[layer], self.dims[layer + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise ValueError(f"layer {layer} arrays do not match dims {expect}")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(w).all() for w in self.weights) and all(
            np.isfinite(b).all() for b in self.biases
        )


@dataclass
class Velocity:
    """Momentum buffers, one pair per layer."""

    weights: list
    biases: list

    @staticmethod
    def zeros_like(model: ModelParams) -> "Velocity":
        return Velocity(
            [np.zeros_like(w) for w in model.weights],
            [np.zeros_like(b) for b in model.biases],
        )

    def copy(self) -> "Velocity":
        return Velocity([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class CurriculumParams:
    """Inclusion fraction at epoch zero and the epoch where gating ends."""

    r: float
    end_epoch: int

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0:
            raise ValueError(f"r must be in (0, 1], got {self.r}")
        if self.end_epoch < 1:
            raise ValueError(f"end_epoch must be at least 1, got {self.end_epoch}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    learning_rate: float = 0.1
    momentum: float = 0.9
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 30
    loss_kind: str = "ce"
    strategy: str = "iid"
    smoothing: SmoothingConfig = SmoothingConfig()
    curriculum: CurriculumParams | None = None
    hidden: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError(
                f"lr_decay_factor must be in (0, 1], got {self.lr_decay_factor}"
            )
        if self.lr_decay_every < 1:
            raise ValueError(f"lr_decay_every must be at least 1, got {self.lr_decay_every}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if any(h < 1 for h in self.hidden):
            raise ValueError(f"hidden sizes must be positive, got {self.hidden}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.strategy != "iid" and self.curriculum is None:
            raise ValueError(f"strategy {self.strategy!r} requires curriculum parameters")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    mu: float
    included_fraction: float
    loss: float
    train_acc: float


@dataclass(frozen=True)
class TrainHistory:
    records: tuple[EpochRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i) -> EpochRecord:
        return self.records[i]


@dataclass
class TrainResult:
    """Final state of a run; pass as ``resume`` to continue it."""

    model: ModelParams
    velocity: Velocity
    history: TrainHistory
    schedule: object
    next_epoch: int


def init_model(dims, seed: int) -> ModelParams:
    """Weights ~ N(0, 1/fan_in), biases zero; deterministic per seed."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"dims must be at least two positive sizes, got {dims}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _INIT_SALT]))
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return ModelParams(dims, weights, biases)


def forward(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probability vector for one feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1 or features.shape[0] != model.dims[0]:
        raise ValueError(
            f"features must have length {model.dims[0]}, got shape {features.shape}"
        )
    return _forward_batch(model, features[None, :])[0][0]


def predict_proba(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """(n, num_classes) probability rows for a feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.dims[0]:
        raise ValueError(
            f"features must be (n, {model.dims[0]}), got shape {features.shape}"
        )
    return _forward_batch(model, features)[0]


def predict_all(model: ModelParams, dataset: Dataset):
    """Per-sample (id, probability vector, predicted class) in dataset order."""
    if dataset.feature_dim != model.dims[0]:
        raise ValueError(
            f"model expects {model.dims[0]} features, dataset has {dataset.feature_dim}"
        )
    if dataset.num_classes != model.dims[-1]:
        raise ValueError(
            f"model has {model.dims[-1]} classes, dataset has {dataset.num_classes}"
        )
    probs = predict_proba(model, dataset.feature_matrix())
    preds = kernels.row_argmax(probs)
    return [
        (s.id, probs[i], int(preds[i])) for i, s in enumerate(dataset.samples)
    ]


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Step schedule: rate * factor ** floor(epoch / every)."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return cfg.learning_rate * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


def gradient(model: ModelParams, features, targets, include_mask=None):
    """Gradients of mean soft cross-entropy over included samples.

    Returns (weight grads, bias grads) as per-layer lists. Excluded samples
    contribute exactly zero; the mean divides by the included count.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    n = features.shape[0]
    if include_mask is None:
        include_mask = np.ones(n, dtype=bool)
    include_mask = np.asarray(include_mask, dtype=bool)
    count = int(np.count_nonzero(include_mask))
    if count == 0:
        raise ValueError("no samples included in the batch")
    row_weights = include_mask.astype(np.float64) / count
    probs, pre, acts = _forward_batch(model, features)
    return _backward(model, probs, targets, row_weights, pre, acts)


def sgd_step(model: ModelParams, grads_w, grads_b, velocity: Velocity, lr: float, momentum: float):
    """Classic momentum: v <- momentum*v + g, p <- p - lr*v. In place."""
    for layer in range(model.num_layers):
        velocity.weights[layer] = momentum * velocity.weights[layer] + grads_w[layer]
        velocity.biases[layer] = momentum * velocity.biases[layer] + grads_b[layer]
        model.weights[layer] = model.weights[layer] - lr * velocity.weights[layer]
        model.biases[layer] = model.biases[layer] - lr * velocity.biases[layer]


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    model_confidence=None,
    human_confidence=None,
    resume: TrainResult | None = None,
) -> TrainResult:
    """Run ``cfg.epochs`` epochs, starting fresh or continuing ``resume``.

    Confidence tables are joined to the dataset by sample id up front; loss
    kinds mcls/hcls take their smoothing vectors from the model/human table
    and strategies mccl/hccl take their gating scores from the matching
    table's scalars. Bit-identical inputs give bit-identical results.
    """
    n = len(dataset)
    num_classes = dataset.num_classes
    x_all = dataset.feature_matrix()
    labels = dataset.modal_labels()

    conf_vectors, scores = _resolve_tables(dataset, cfg, model_confidence, human_confidence)

    base = np.zeros((n, num_classes))
    base[np.arange(n), labels] = 1.0
    if cfg.loss_kind == "ce":
        targets = base
    elif cfg.loss_kind == "ls":
        targets = kernels.smooth_rows_uniform(base, cfg.smoothing.alpha)
    else:
        targets = smoothed_targets(base, conf_vectors, cfg.smoothing.alpha, cfg.smoothing.gamma)

    if resume is not None:
        model = resume.model.copy()
        velocity = resume.velocity.copy()
        start_epoch = resume.next_epoch
        schedule = resume.schedule if cfg.strategy != "iid" else None
        if cfg.strategy != "iid" and schedule is None:
            raise ValueError("resume state carries no curriculum schedule")
    else:
        model = init_model((dataset.feature_dim, *cfg.hidden, num_classes), cfg.seed)
        velocity = Velocity.zeros_like(model)
        start_epoch = 0
        schedule = None
        if cfg.strategy != "iid":
            criterion = "model" if cfg.strategy == "mccl" else "human"
            schedule = _curriculum.make_schedule(
                scores, cfg.curriculum.r, cfg.curriculum.end_epoch, criterion
            )

    records = []
    for step in range(cfg.epochs):
        epoch = start_epoch + step
        lr = lr_at(epoch, cfg)
        if schedule is not None:
            mu = schedule.mu
            mask_all = _curriculum.inclusion_mask(scores, mu)
        else:
            mu = 0.0
            mask_all = np.ones(n, dtype=bool)
        frac = float(np.count_nonzero(mask_all)) / n

        shuffle_rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, _SHUFFLE_SALT, epoch])
        )
        perm = shuffle_rng.permutation(n)

        loss_sum = 0.0
        included = 0
        correct = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            xb = np.ascontiguousarray(x_all[idx])
            tb = np.ascontiguousarray(targets[idx])
            mb = mask_all[idx]
            probs, pre, acts = _forward_batch(model, xb)
            losses = kernels.soft_ce_rows(tb, probs)
            loss_sum += float(losses[mb].sum())
            count = int(np.count_nonzero(mb))
            included += count
            correct += int(np.count_nonzero(kernels.row_argmax(probs) == labels[idx]))
            if count:
                row_weights = mb.astype(np.float64) / count
                gw, gb = _backward(model, probs, tb, row_weights, pre, acts)
                sgd_step(model, gw, gb, velocity, lr, cfg.momentum)

        mean_loss = loss_sum / included if included else 0.0
        if not np.isfinite(mean_loss) or not model.all_finite():
            raise TrainingDivergedError(
                f"training diverged at epoch {epoch}: non-finite loss or parameters"
            )
        records.append(
            EpochRecord(
                epoch=epoch,
                lr=lr,
                mu=mu,
                included_fraction=frac,
                loss=mean_loss,
                train_acc=correct / n,
            )
        )
        if schedule is not None:
            schedule = _curriculum.advance(schedule)

    return TrainResult(
        model=model,
        velocity=velocity,
        history=TrainHistory(tuple(records)),
        schedule=schedule,
        next_epoch=start_epoch + cfg.epochs,
    )


def _resolve_tables(dataset, cfg, model_confidence, human_confidence):
    """Join the tables a config needs; returns (loss vectors, gate scores)."""
    model_arrays = None
    human_arrays = None
    if cfg.loss_kind == "mcls" or cfg.strategy == "mccl":
        if model_confidence is None:
            raise ValueError(
                f"loss {cfg.loss_kind!r} / strategy {cfg.strategy!r} needs a model confidence table"
            )
        model_arrays = model_confidence.aligned_to(dataset)
    if cfg.loss_kind == "hcls" or cfg.strategy == "hccl":
        if human_confidence is None:
            raise ValueError(
                f"loss {cfg.loss_kind!r} / strategy {cfg.strategy!r} needs a human confidence table"
            )
        human_arrays = human_confidence.aligned_to(dataset)

    conf_vectors = None
    if cfg.loss_kind == "mcls":
        conf_vectors = model_arrays[0]
    elif cfg.loss_kind == "hcls":
        conf_vectors = human_arrays[0]

    scores = None
    if cfg.strategy == "mccl":
        scores = model_arrays[1]
    elif cfg.strategy == "hccl":
        scores = human_arrays[1]
    return conf_vectors, scores


def _forward_batch(model: ModelParams, x: np.ndarray):
    """Returns (probability rows, hidden pre-activations, layer inputs)."""
    pre = []
    acts = [x]
    h = x
    last = model.num_layers - 1
    for layer in range(model.num_layers):
        z = kernels.affine(h, model.weights[layer], model.biases[layer])
        if layer < last:
            pre.append(z)
            h = kernels.relu(z)
            acts.append(h)
        else:
            return kernels.softmax_rows(z), pre, acts


def _backward(model, probs, targets, row_weights, pre, acts):
    grads_w = [None] * model.num_layers
    grads_b = [None] * model.num_layers
    dz = kernels.softmax_ce_delta(probs, targets, row_weights)
    for layer in range(model.num_layers - 1, -1, -1):
        dw, db, dh = kernels.affine_backward(acts[layer], dz, model.weights[layer])
        grads_w[layer] = dw
        grads_b[layer] = db
        if layer > 0:
            dz = kernels.relu_backward(dh, pre[layer - 1])
    return grads_w, grads_b


def save_model(model: ModelParams, path) -> None:
    """Text format: JSON header line, then one space-separated float line per
    weight matrix (row-major) and per bias vector. Round-trips bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dims": list(model.dims), "hidden_activation": "relu"}) + "\n")
        for w, b in zip(model.weights, model.biases):
            fh.write(" ".join(repr(float(v)) for v in w.ravel()) + "\n")
            fh.write(" ".join(repr(float(v)) for v in b) + "\n")


def load_model(path) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty model file")
    try:
        header = json.loads(lines[0])
        dims = tuple(int(d) for d in header["dims"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: line 1: bad model header ({exc})") from None
    expected = 1 + 2 * (len(dims) - 1)
    if len(lines) < expected:
        raise DataFormatError(
            f"{path}: expected {expected} lines for dims {dims}, found {len(lines)}"
        )
    weights = []
    biases = []
    for layer in range(len(dims) - 1):
        fan_in, fan_out = dims[layer], dims[layer + 1]
        w = _parse_floats(path, 2 + 2 * layer, lines[1 + 2 * layer], fan_in * fan_out)
        b = _parse_floats(path, 3 + 2 * layer, lines[2 + 2 * layer], fan_out)
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(b)
    model = ModelParams(dims, weights, biases)
    if not model.all_finite():
        raise DataFormatError(f"{path}: model contains non-finite values")
    return model


def _parse_floats(path, lineno: int, line: str, expect: int) -> np.ndarray:
    parts = line.split()
    if len(parts) != expect:
        raise DataFormatError(
            f"{path}: line {lineno}: expected {expect} values, found {len(parts)}"
        )
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise DataFormatError(f"{path}: line {lineno}: non-numeric value") from None


def save_history(history: TrainHistory, path) -> None:
    """One JSON object per epoch record."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in history.records:
            fh.write(
                json.dumps(
                    {
                        "epoch": r.epoch,
                        "lr": r.lr,
                        "mu": r.mu,
                        "included_fraction": r.included_fraction,
                        "loss": r.loss,
                        "train_acc": r.train_acc,
                    }
                )
                + "\n"
            )


def load_history(path) -> TrainHistory:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append(
                    EpochRecord(
                        epoch=int(rec["epoch"]),
                        lr=float(rec["lr"]),
                        mu=float(rec["mu"]),
                        included_fraction=float(rec["included_fraction"]),
                        loss=float(rec["loss"]),
                        train_acc=float(rec["train_acc"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    return TrainHistory(tuple(records))
