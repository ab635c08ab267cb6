"""The adaptive residual attention stack, graph readout, and classifier.

The depth-n stack follows G_1 = F_1(x), G_m = G_{m-1} + F_m(G_{m-1}) where
each F_m is one full attention layer.  An input projection maps raw features
to the hidden width first, so the residual additions are dimension-consistent
for any depth.  Readout is a global mean pool per graph, followed by a linear
classifier and softmax.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import gat
from . import tensor as T
from .gat import GatLayerParams
from .graphs import GraphBatch
from .tensor import ShapeError, Tensor


class ConfigError(Exception):
    """Inconsistent model configuration."""


ABLATION_VARIANTS = ("full", "no_image", "no_multihead", "no_fusion")

PROB_FLOOR = 1e-12


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    heads: int = 2
    topk_ratio: float = 0.8
    dropout_rate: float = 0.2
    include_image: bool = True
    multi_head_enabled: bool = True
    residual_enabled: bool = True
    layer_search_range: tuple[int, int] = (1, 4)
    seed: int = 0
    leaky_slope: float = 0.2
    elu_alpha: float = 1.0
    topk_mode: str = "coefficient"       # or "node": drop nodes by received attention
    topk_scope: str = "all_layers"       # or "last_layer"
    hidden_aggregation: str = "concat"
    final_aggregation: str = "average"
    comment_edges: str = "star"

    def __post_init__(self):
        n_min, n_max = self.layer_search_range
        if n_min < 1 or n_min > n_max:
            raise ConfigError(f"bad layer search range [{n_min}, {n_max}]")
        if self.heads < 1:
            raise ConfigError("heads must be at least 1")
        if self.topk_mode not in ("coefficient", "node"):
            raise ConfigError(f"unknown topk_mode '{self.topk_mode}'")
        if self.topk_scope not in ("all_layers", "last_layer"):
            raise ConfigError(f"unknown topk_scope '{self.topk_scope}'")
        for name in ("hidden_aggregation", "final_aggregation"):
            if getattr(self, name) not in ("concat", "average"):
                raise ConfigError(f"unknown {name} '{getattr(self, name)}'")
        if self.comment_edges not in ("star", "chain"):
            raise ConfigError(f"unknown comment_edges '{self.comment_edges}'")

    @property
    def effective_heads(self) -> int:
        return self.heads if self.multi_head_enabled else 1


def ablation_variant(config: ModelConfig, variant: str) -> ModelConfig:
    """Derive the configuration for one of the ablation experiments."""
    if variant == "full":
        return dataclasses.replace(config)
    if variant == "no_image":
        return dataclasses.replace(config, include_image=False)
    if variant == "no_multihead":
        return dataclasses.replace(config, multi_head_enabled=False, heads=1)
    if variant == "no_fusion":
        return dataclasses.replace(config, residual_enabled=False)
    raise ConfigError(f"unknown ablation variant '{variant}' (use one of {ABLATION_VARIANTS})")


@dataclass
class MagicModel:
    input_dim: int
    hidden_dim: int
    num_classes: int
    input_proj: Tensor
    layers: list[GatLayerParams]
    classifier_w: Tensor
    classifier_b: Tensor
    config: ModelConfig

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("model needs at least one attention layer")
        for i, layer in enumerate(self.layers):
            if layer.output_dim != self.hidden_dim:
                raise ConfigError(f"layer {i} outputs {layer.output_dim}, expected {self.hidden_dim}")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> list[tuple[str, Tensor]]:
        """All trainable tensors in a fixed, documented order."""
        out = [("input_proj.weight", self.input_proj)]
        for i, layer in enumerate(self.layers):
            for k in range(layer.heads):
                out.append((f"layers.{i}.heads.{k}.weight", layer.weights[k]))
                out.append((f"layers.{i}.heads.{k}.attention", layer.att_vectors[k]))
        out.append(("classifier.weight", self.classifier_w))
        out.append(("classifier.bias", self.classifier_b))
        return out


def build_model(input_dim: int, num_classes: int, n_layers: int, config: ModelConfig) -> MagicModel:
    """Glorot-initialized model of the requested depth, seeded from the config."""
    if n_layers < 1:
        raise ConfigError("n_layers must be at least 1")
    heads = config.effective_heads
    if config.hidden_dim % heads != 0:
        raise ConfigError(f"hidden_dim {config.hidden_dim} not divisible by {heads} heads")
    rng = np.random.default_rng(config.seed)
    layers = []
    d_in = config.hidden_dim
    for i in range(n_layers):
        final = i == n_layers - 1
        aggregation = config.final_aggregation if final else config.hidden_aggregation
        d_head = config.hidden_dim if aggregation == "average" else config.hidden_dim // heads
        layers.append(
            gat.init_layer(
                rng,
                d_in,
                d_head,
                heads,
                aggregation,
                leaky_slope=config.leaky_slope,
                topk_ratio=config.topk_ratio,
                dropout_rate=config.dropout_rate,
            )
        )
    return MagicModel(
        input_dim=input_dim,
        hidden_dim=config.hidden_dim,
        num_classes=num_classes,
        input_proj=T.parameter(gat.glorot(rng, input_dim, config.hidden_dim)),
        layers=layers,
        classifier_w=T.parameter(gat.glorot(rng, config.hidden_dim, num_classes)),
        classifier_b=T.parameter(np.zeros((1, num_classes))),
        config=config,
    )


def clone_model(model: MagicModel) -> MagicModel:
    """Structural copy with freshly copied parameter values."""
    copy = build_model(model.input_dim, model.num_classes, model.n_layers, model.config)
    load_parameter_arrays(copy, [p.data for _, p in model.parameters()])
    return copy


def parameter_arrays(model: MagicModel) -> list[np.ndarray]:
    return [p.data.copy() for _, p in model.parameters()]


def load_parameter_arrays(model: MagicModel, arrays: list[np.ndarray]) -> None:
    params = model.parameters()
    if len(arrays) != len(params):
        raise ConfigError(f"expected {len(params)} parameter arrays, got {len(arrays)}")
    for (name, p), arr in zip(params, arrays):
        if arr.shape != p.shape:
            raise ConfigError(f"shape mismatch for '{name}': {arr.shape} vs {p.shape}")
        p.data = np.array(arr, dtype=np.float64)


def forward(
    model: MagicModel,
    batch: GraphBatch,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the full network on a batch; returns (logits, probabilities)."""
    if batch.node_features.shape[1] != model.input_dim:
        raise ShapeError(
            f"batch feature dim {batch.node_features.shape[1]} != model input dim {model.input_dim}"
        )
    cfg = model.config
    h = T.matmul(T.constant(batch.node_features), model.input_proj)
    graph_ids = batch.graph_ids if cfg.topk_mode == "node" else None
    for i, layer in enumerate(model.layers):
        in_scope = cfg.topk_scope == "all_layers" or i == model.n_layers - 1
        f = gat.gat_layer(
            h,
            layer,
            batch.adjacency,
            training=training,
            rng=rng,
            apply_topk=in_scope,
            topk_mode=cfg.topk_mode,
            graph_ids=graph_ids,
            elu_alpha=cfg.elu_alpha,
        )
        h = T.add(h, f) if cfg.residual_enabled and i > 0 else f
    pooled = T.matmul(T.constant(batch.pooling_matrix()), h)
    logits = T.add_rowvec(T.matmul(pooled, model.classifier_w), model.classifier_b)
    probs = T.softmax_masked(logits, np.ones(logits.shape, dtype=bool))
    return logits, probs


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeError("label out of range")
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def loss(probs: Tensor, y: np.ndarray) -> Tensor:
    """Cross-entropy against one-hot labels, averaged over the batch.

    Probabilities are floored at 1e-12 before the log, which keeps the loss
    finite without visibly changing it on non-degenerate inputs.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != probs.shape:
        raise ShapeError(f"labels {y.shape} vs probabilities {probs.shape}")
    picked = T.mul(T.log(T.clamp_min(probs, PROB_FLOOR)), T.constant(y))
    return T.scale(T.sum_all(picked), -1.0 / probs.rows)


@dataclass
class SearchCandidate:
    n: int
    val_accuracy: float | None
    diverged: bool = False
    history: list = dataclasses.field(default_factory=list)


def search_layers(model_config: ModelConfig, train_config, train_set, val_set, num_classes: int, log=None):
    """Train one model per depth in the configured range and keep the depth
    with the best validation accuracy; ties go to the smallest depth.

    Every candidate trains under the same seed and budget.  Returns
    (best_n, best_model, report) where report lists every candidate with its
    training history.  Candidates whose training diverges are recorded and
    skipped; it is an error for all of them to diverge.
    """
    from . import training as training_mod

    if not train_set or not val_set:
        raise ConfigError("layer search needs non-empty train and validation sets")
    input_dim = train_set[0].dim
    n_min, n_max = model_config.layer_search_range
    report: list[SearchCandidate] = []
    best: tuple[float, int, MagicModel] | None = None
    for n in range(n_min, n_max + 1):
        candidate = build_model(input_dim, num_classes, n, model_config)
        candidate_log = None if log is None else (lambda line, n=n: log(f"[n={n}] {line}"))
        try:
            trained, history = training_mod.train(candidate, train_set, val_set, train_config, log=candidate_log)
        except training_mod.DivergenceError:
            report.append(SearchCandidate(n=n, val_accuracy=None, diverged=True))
            continue
        score = max((h["val_accuracy"] for h in history), default=0.0)
        report.append(SearchCandidate(n=n, val_accuracy=score, diverged=False, history=history))
        if best is None or score > best[0]:
            best = (score, n, trained)
    if best is None:
        raise ConfigError("every layer-search candidate diverged")
    return best[1], best[2], report
