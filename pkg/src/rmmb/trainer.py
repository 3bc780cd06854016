"""Two-layer perceptron trainer on synthetic blob data.

Exercises exact vs sketch-compressed linear layers end to end: forward through
linear -> ReLU -> linear, softmax cross-entropy, hand-chained backward (layer 2,
ReLU mask, layer 1), plain SGD updates.  Every logged step records loss, batch
accuracy, per-layer variance reports, and the total bytes the layer contexts
hold for backward.

The loop itself keeps references to batch activations for diagnostics (the
variance reports need the uncompressed X), but the layer contexts only ever
hold what their storage mode allows; the memory accounting reflects the
contexts alone.

Evaluation never sketches: randomization affects only the stored backward
context, so the forward map is the same in both modes and eval runs it as
plain affine arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ConfigError
from .linalg import Matrix, ShapeError, as_matrix, frobenius_norm_sq
from .linear import (
    LayerGrads,
    LinearLayer,
    SavedContext,
    backward,
    exact_weight_grad,
    forward,
    layer_from_bytes,
    layer_to_bytes,
    stored_activation_bytes,
)
from .prng import RngState, derive_seed
from .sketch import SketchSpec
from .variance import VarianceReport, check_bound, sgd_report

# Nonce values for deriving independent streams from the master training seed.
_NONCE_INIT_LAYER1 = 11
_NONCE_INIT_LAYER2 = 12
_NONCE_SHUFFLE = 13


class TrainingDivergedError(RuntimeError):
    """Loss or activations became non-finite during training."""


@dataclass(frozen=True)
class DatasetParams:
    """Synthetic blob generator settings."""

    n_samples: int = 256
    dim: int = 4
    classes: int = 2
    separation: float = 8.0
    seed: int = 7

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        if self.n_samples < 2 * self.classes:
            raise ValueError(
                f"need n_samples >= 2 * classes, got {self.n_samples} for {self.classes} classes"
            )
        if self.dim < self.classes:
            raise ValueError(
                f"need dim >= classes for orthogonal class centers, got dim={self.dim}, "
                f"classes={self.classes}"
            )
        if not self.separation > 0:
            raise ValueError(f"separation must be positive, got {self.separation}")


@dataclass
class Dataset:
    features: Matrix
    labels: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ShapeError("features must be 2-D")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ShapeError("labels must be 1-D with one entry per feature row")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def generate_blobs(params: DatasetParams) -> Dataset:
    """Class-conditional Gaussian clusters, deterministic given the seed.

    Class c's center is (separation / sqrt(2)) * e_c, so every pair of centers
    sits exactly ``separation`` apart; noise is unit-variance per coordinate.
    Labels cycle 0, 1, ..., classes-1, so counts per class are balanced up to
    one sample.
    """
    state = RngState(params.seed)
    labels = np.arange(params.n_samples, dtype=np.int64) % params.classes
    centers = np.zeros((params.classes, params.dim))
    radius = params.separation / math.sqrt(2.0)
    centers[np.arange(params.classes), np.arange(params.classes)] = radius
    noise = state.normal(params.n_samples * params.dim).reshape(params.n_samples, params.dim)
    return Dataset(features=centers[labels] + noise, labels=labels)


def save_dataset_csv(path, dataset: Dataset) -> None:
    """One sample per line: feature values then the integer label."""
    rows = np.hstack([dataset.features, dataset.labels[:, None].astype(np.float64)])
    np.savetxt(path, rows, fmt="%.17g", delimiter=",")


def load_dataset_csv(path) -> Dataset:
    rows = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if rows.shape[1] < 2:
        raise ValueError("dataset CSV needs at least one feature column plus a label")
    labels_raw = rows[:, -1]
    labels = labels_raw.astype(np.int64)
    if not np.array_equal(labels_raw, labels.astype(np.float64)):
        raise ValueError("dataset CSV labels must be integers")
    return Dataset(features=as_matrix(rows[:, :-1]), labels=labels)


@dataclass
class TrainConfig:
    """Everything a training run depends on; validated on construction."""

    dataset: DatasetParams = field(default_factory=DatasetParams)
    dataset_path: str | None = None
    batch_size: int = 16
    epochs: int = 20
    learning_rate: float = 0.1
    log_every: int = 10
    hidden_dim: int = 16
    seed: int = 2024
    sketch: SketchSpec | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {self.log_every}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")

    @classmethod
    def from_dict(cls, cfg: dict) -> "TrainConfig":
        """Build from a merged CLI config dict, mapping errors to ConfigError."""
        try:
            ds_cfg = dict(cfg.get("dataset") or {})
            dataset_path = ds_cfg.pop("path", None)
            dataset = DatasetParams(**ds_cfg)
            sketch_cfg = cfg.get("sketch")
            sketch = None if sketch_cfg is None else SketchSpec.from_json_dict(sketch_cfg)
            return cls(
                dataset=dataset,
                dataset_path=dataset_path,
                batch_size=int(cfg.get("batch_size", 16)),
                epochs=int(cfg.get("epochs", 20)),
                learning_rate=float(cfg.get("learning_rate", 0.1)),
                log_every=int(cfg.get("log_every", 10)),
                hidden_dim=int(cfg.get("hidden_dim", 16)),
                seed=int(cfg.get("seed", 2024)),
                sketch=sketch,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid training config: {exc}") from exc

    def resolve_dataset(self) -> Dataset:
        if self.dataset_path is not None:
            return load_dataset_csv(self.dataset_path)
        return generate_blobs(self.dataset)


@dataclass
class MlpModel:
    """linear -> ReLU -> linear."""

    layer1: LinearLayer
    layer2: LinearLayer

    def __post_init__(self):
        if self.layer1.n_out != self.layer2.n_in:
            raise ShapeError(
                f"layer dims do not chain: layer1 outputs {self.layer1.n_out}, "
                f"layer2 expects {self.layer2.n_in}"
            )

    @property
    def layers(self) -> tuple[LinearLayer, LinearLayer]:
        return (self.layer1, self.layer2)


def init_model(
    n_in: int,
    hidden_dim: int,
    classes: int,
    seed: int,
    sketch: SketchSpec | None = None,
) -> MlpModel:
    """Gaussian init with std 1/sqrt(fan_in), zero bias, fixed derived seeds."""
    s1 = RngState(derive_seed(seed, _NONCE_INIT_LAYER1))
    s2 = RngState(derive_seed(seed, _NONCE_INIT_LAYER2))
    w1 = s1.normal(hidden_dim * n_in).reshape(hidden_dim, n_in) / math.sqrt(n_in)
    w2 = s2.normal(classes * hidden_dim).reshape(classes, hidden_dim) / math.sqrt(hidden_dim)
    return MlpModel(
        layer1=LinearLayer(w=w1, b=np.zeros(hidden_dim), sketch=sketch, layer_id=0),
        layer2=LinearLayer(w=w2, b=np.zeros(classes), sketch=sketch, layer_id=1),
    )


def softmax_cross_entropy(logits: Matrix, labels: np.ndarray) -> tuple[float, Matrix]:
    """Mean cross-entropy and its gradient w.r.t. logits (already averaged)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    denom = exps.sum(axis=1, keepdims=True)
    batch = logits.shape[0]
    idx = np.arange(batch)
    log_probs = shifted - np.log(denom)
    loss = float(-log_probs[idx, labels].mean())
    dlogits = exps / denom
    dlogits[idx, labels] -= 1.0
    dlogits /= batch
    return loss, dlogits


@dataclass
class StepEvent:
    """Internal per-step snapshot handed to metrics builders and callbacks.

    ``layer_inputs`` are the uncompressed inputs of each layer (trainer-held
    diagnostics); ``contexts`` are what the layers themselves stored.
    """

    step: int
    epoch: int
    loss: float
    accuracy: float
    layer_inputs: list[Matrix]
    output_grads: list[Matrix]
    grads: list[LayerGrads]
    contexts: list[SavedContext]


@dataclass(frozen=True)
class StepMetrics:
    step: int
    loss: float
    accuracy: float
    stored_activation_bytes: int
    layers: list[VarianceReport]

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "loss": self.loss,
            "accuracy": self.accuracy,
            "stored_activation_bytes": self.stored_activation_bytes,
            "layers": [r.to_json_dict() for r in self.layers],
        }


def _layer_report(event: StepEvent, index: int) -> VarianceReport:
    x = event.layer_inputs[index]
    dy = event.output_grads[index]
    ctx = event.contexts[index]
    if ctx.is_randomized:
        return check_bound(x, dy, ctx.handle.proj, layer_id=index, step=event.step)
    return sgd_report(x, dy, layer_id=index, step=event.step)


def _metrics_from_event(event: StepEvent) -> StepMetrics:
    return StepMetrics(
        step=event.step,
        loss=event.loss,
        accuracy=event.accuracy,
        stored_activation_bytes=sum(stored_activation_bytes(c) for c in event.contexts),
        layers=[_layer_report(event, i) for i in range(len(event.contexts))],
    )


def _require_finite(arr: np.ndarray, what: str, step: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise TrainingDivergedError(f"training diverged at step {step}: non-finite {what}")


def train(
    config: TrainConfig,
    on_event: Callable[[StepEvent], None] | None = None,
) -> tuple[list[StepMetrics], MlpModel]:
    """Run SGD; returns metrics at every log_every-th step plus the final model.

    Minibatches are drawn without replacement from a fresh shuffle each epoch;
    a ragged tail smaller than batch_size is dropped.  Deterministic given the
    config: data, init, shuffles, and sketches all come from derived seeds.
    """
    dataset = config.resolve_dataset()
    if dataset.n_samples < config.batch_size:
        raise ConfigError(
            f"dataset has {dataset.n_samples} samples, fewer than batch_size {config.batch_size}"
        )
    classes = int(dataset.labels.max()) + 1
    model = init_model(dataset.dim, config.hidden_dim, max(classes, 2), config.seed, config.sketch)
    metrics: list[StepMetrics] = []
    step = 0
    for epoch in range(config.epochs):
        order = RngState(derive_seed(config.seed, _NONCE_SHUFFLE, epoch)).permutation(
            dataset.n_samples
        )
        n_batches = dataset.n_samples // config.batch_size
        for b in range(n_batches):
            take = order[b * config.batch_size : (b + 1) * config.batch_size]
            xb = dataset.features[take]
            yb = dataset.labels[take]

            # Overflow to inf is detected and raised explicitly below, so the
            # elementwise warnings would be redundant noise on the way there.
            with np.errstate(over="ignore", invalid="ignore"):
                pre, ctx1 = forward(model.layer1, xb, step=step)
                _require_finite(pre, "activations in layer 0", step)
                hidden = np.maximum(pre, 0.0)
                logits, ctx2 = forward(model.layer2, hidden, step=step)
                _require_finite(logits, "activations in layer 1", step)
                loss, dlogits = softmax_cross_entropy(logits, yb)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"training diverged at step {step}: non-finite loss"
                    )
                g2 = backward(model.layer2, ctx2, dlogits)
                dpre = g2.dx * (pre > 0.0)
                g1 = backward(model.layer1, ctx1, dpre)

            if step % config.log_every == 0 or on_event is not None:
                accuracy = float((logits.argmax(axis=1) == yb).mean())
                event = StepEvent(
                    step=step,
                    epoch=epoch,
                    loss=loss,
                    accuracy=accuracy,
                    layer_inputs=[xb, hidden],
                    output_grads=[dpre, dlogits],
                    grads=[g1, g2],
                    contexts=[ctx1, ctx2],
                )
                if step % config.log_every == 0:
                    metrics.append(_metrics_from_event(event))
                if on_event is not None:
                    on_event(event)

            lr = config.learning_rate
            model.layer1.w = model.layer1.w - lr * g1.dw
            model.layer1.b = model.layer1.b - lr * g1.db
            model.layer2.w = model.layer2.w - lr * g2.dw
            model.layer2.b = model.layer2.b - lr * g2.db
            step += 1
    return metrics, model


def evaluate(model: MlpModel, dataset: Dataset) -> tuple[float, float]:
    """Mean cross-entropy and argmax accuracy over the whole dataset.

    Pure affine forward; no contexts are built and no sketching happens, so
    the result is independent of any sketch configuration on the layers.
    """
    if dataset.dim != model.layer1.n_in:
        raise ShapeError(
            f"dataset has {dataset.dim} features, model expects {model.layer1.n_in}"
        )
    hidden = np.maximum(dataset.features @ model.layer1.w.T + model.layer1.b, 0.0)
    logits = hidden @ model.layer2.w.T + model.layer2.b
    loss, _ = softmax_cross_entropy(logits, dataset.labels)
    accuracy = float((logits.argmax(axis=1) == dataset.labels).mean())
    return loss, accuracy


def variance_report_records(config: TrainConfig) -> list[dict]:
    """Per-layer noise records from a run, one dict per (logged step, layer).

    With a sketch configured, the model trains in randomized mode and each
    record pairs the randomized weight gradient with the exact one computed
    on the same batch: the usual variance-report fields plus "memory_ratio",
    "dw_err_sq" (squared Frobenius error of the randomized dW), and "loss".
    Without a sketch, records carry only the minibatch-noise fields.
    """
    records: list[dict] = []

    def collect(event: StepEvent) -> None:
        if event.step % config.log_every != 0:
            return
        for index, ctx in enumerate(event.contexts):
            report = _layer_report(event, index)
            record = report.to_json_dict()
            record["loss"] = event.loss
            if ctx.is_randomized:
                record["memory_ratio"] = ctx.handle.proj / ctx.batch
                exact_dw = exact_weight_grad(event.layer_inputs[index], event.output_grads[index])
                record["dw_err_sq"] = frobenius_norm_sq(event.grads[index].dw - exact_dw)
            records.append(record)

    train(config, on_event=collect)
    return records


def save_model(path, model: MlpModel) -> None:
    """Concatenated layer blobs, layer 1 first."""
    with open(path, "wb") as fh:
        fh.write(layer_to_bytes(model.layer1))
        fh.write(layer_to_bytes(model.layer2))


def load_model(path, sketch: SketchSpec | None = None) -> MlpModel:
    """Read a two-layer checkpoint; storage policy is supplied, not stored."""
    with open(path, "rb") as fh:
        blob = fh.read()
    layer1, offset = layer_from_bytes(blob, 0)
    layer2, offset = layer_from_bytes(blob, offset)
    if offset != len(blob):
        raise ValueError(f"checkpoint has {len(blob) - offset} trailing bytes")
    layer1.sketch = sketch
    layer1.layer_id = 0
    layer2.sketch = sketch
    layer2.layer_id = 1
    return MlpModel(layer1=layer1, layer2=layer2)
