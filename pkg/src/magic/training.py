"""Adam optimization and the epoch loop with validation-based model selection.

Each epoch shuffles the training graphs with a permutation derived from
(seed, epoch), iterates mini-batches with dropout active, and evaluates on
the validation set with dropout inactive.  The parameter snapshot with the
highest validation accuracy is the one returned; on ties the earlier epoch
wins.  Everything is driven by seeded generators, so a fixed (seed, config,
data) triple reproduces the trajectory bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics as metrics_mod
from . import model as model_mod
from .graphs import batch as make_batch
from .tensor import GradientTape, NumericError, backward


class TrainingError(Exception):
    """Invalid training inputs or non-finite gradients."""


class DivergenceError(TrainingError):
    """Loss or gradients became non-finite during training."""

    def __init__(self, epoch: int, batch_index: int):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class TrainConfig:
    learning_rate: float = 0.002
    batch_size: int = 128
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    patience: int | None = 20
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be positive")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be at least 1")


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for _, p in params],
            v=[np.zeros_like(p.data) for _, p in params],
            t=0,
        )


def adam_step(params, grads, state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place.

    `params` is the model's named parameter list; `grads` must align with it.
    A non-finite gradient aborts with the offending parameter's name.
    """
    state.t += 1
    correction1 = 1.0 - config.beta1 ** state.t
    correction2 = 1.0 - config.beta2 ** state.t
    for i, ((name, p), g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter '{name}'")
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * (g * g)
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        p.data = p.data - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


def clip_gradients(grads, max_norm: float):
    """Gradients rescaled so their global L2 norm is at most max_norm.

    Returns fresh arrays when rescaling: backward rules may hand the same
    array to several tensors, so in-place scaling would compound.
    """
    total = 0.0
    for g in grads:
        if g is not None:
            total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return [None if g is None else g * factor for g in grads]


def train(model, train_set, val_set, config: TrainConfig, log=None):
    """Run the training protocol; returns (best_model, history).

    history holds one {epoch, train_loss, val_accuracy} entry per epoch.  The
    returned model carries the snapshot with the highest validation accuracy.
    """
    if not train_set or not val_set:
        raise TrainingError("train and validation sets must be non-empty")
    params = model.parameters()
    state = AdamState.for_params(params)
    dropout_rng = np.random.default_rng([config.seed, 0xD0])
    history: list[dict] = []
    best_acc = -1.0
    best_arrays = model_mod.parameter_arrays(model)
    epochs_since_best = 0
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, 1 + epoch]).permutation(len(train_set))
        loss_weighted = 0.0
        for batch_index, start in enumerate(range(0, len(order), config.batch_size)):
            graphs = [train_set[i] for i in order[start:start + config.batch_size]]
            gb = make_batch(graphs)
            y = model_mod.one_hot(gb.labels, model.num_classes)
            try:
                with GradientTape():
                    _, probs = model_mod.forward(model, gb, training=True, rng=dropout_rng)
                    loss_t = model_mod.loss(probs, y)
                backward(loss_t)
            except NumericError:
                raise DivergenceError(epoch, batch_index) from None
            grads = [p.grad for _, p in params]
            if config.clip_norm is not None:
                grads = clip_gradients(grads, config.clip_norm)
            adam_step(params, grads, state, config)
            for _, p in params:
                p.grad = None
            loss_weighted += loss_t.item() * len(graphs)
        train_loss = loss_weighted / len(train_set)
        val_accuracy = evaluate(model, val_set).accuracy
        history.append({"epoch": epoch, "train_loss": train_loss, "val_accuracy": val_accuracy})
        if log is not None:
            log(f"epoch={epoch} train_loss={train_loss:.6f} val_accuracy={val_accuracy:.4f}")
        if val_accuracy > best_acc:
            best_acc = val_accuracy
            best_arrays = model_mod.parameter_arrays(model)
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if config.patience is not None and epochs_since_best >= config.patience:
                break
    best_model = model_mod.build_model(model.input_dim, model.num_classes, model.n_layers, model.config)
    model_mod.load_parameter_arrays(best_model, best_arrays)
    return best_model, history


def predict_labels(model, graphs, batch_size: int = 256) -> np.ndarray:
    """Argmax class per graph, dropout inactive."""
    predictions = []
    for start in range(0, len(graphs), batch_size):
        gb = make_batch(graphs[start:start + batch_size])
        logits, _ = model_mod.forward(model, gb, training=False)
        predictions.append(np.argmax(logits.data, axis=1))
    return np.concatenate(predictions)


def evaluate(model, dataset, batch_size: int = 256) -> "metrics_mod.MetricsReport":
    """Confusion matrix and macro metrics on a labeled graph set."""
    if not dataset:
        raise TrainingError("cannot evaluate an empty dataset")
    predicted = predict_labels(model, dataset, batch_size)
    actual = np.array([g.label for g in dataset], dtype=np.int64)
    matrix = metrics_mod.confusion(actual, predicted, model.num_classes)
    return metrics_mod.metrics(matrix)
