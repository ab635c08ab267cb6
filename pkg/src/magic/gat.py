"""Multi-head graph attention with top-k attention-coefficient pooling.

Attention is computed per directed edge over explicit neighbor lists, so the
same code path serves single graphs and block-diagonal batches; a node's
neighborhood never extends past its own graph.  The attention function is the
single-layer feedforward form LeakyReLU(a^T [W h_i || W h_j]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graphs import Adjacency
from .tensor import ShapeError, Tensor


@dataclass
class GatLayerParams:
    """Per-head weight matrices and attention vectors plus layer hyperparameters."""

    weights: list[Tensor]        # per head, d_in x d_head
    att_vectors: list[Tensor]    # per head, 2*d_head x 1
    leaky_slope: float = 0.2
    topk_ratio: float = 0.8
    dropout_rate: float = 0.2
    aggregation: str = "concat"  # "concat" for hidden layers, "average" for the last

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.att_vectors):
            raise ShapeError("need one attention vector per head weight matrix")
        d_head = self.weights[0].cols
        for w, a in zip(self.weights, self.att_vectors):
            if w.cols != d_head or a.shape != (2 * d_head, 1):
                raise ShapeError("inconsistent head shapes")
        if not 0.0 < self.topk_ratio <= 1.0:
            raise ShapeError("topk_ratio must be in (0, 1]")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ShapeError("dropout_rate must be in [0, 1)")
        if self.aggregation not in ("concat", "average"):
            raise ShapeError(f"unknown aggregation '{self.aggregation}'")

    @property
    def heads(self) -> int:
        return len(self.weights)

    @property
    def head_dim(self) -> int:
        return self.weights[0].cols

    @property
    def output_dim(self) -> int:
        if self.aggregation == "concat":
            return self.heads * self.head_dim
        return self.head_dim


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform Glorot initialization scaled by fan-in plus fan-out."""
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_layer(
    rng: np.random.Generator,
    d_in: int,
    d_head: int,
    heads: int,
    aggregation: str,
    leaky_slope: float = 0.2,
    topk_ratio: float = 0.8,
    dropout_rate: float = 0.2,
) -> GatLayerParams:
    weights = [T.parameter(glorot(rng, d_in, d_head)) for _ in range(heads)]
    att = [T.parameter(glorot(rng, 2 * d_head, 1)) for _ in range(heads)]
    return GatLayerParams(
        weights=weights,
        att_vectors=att,
        leaky_slope=leaky_slope,
        topk_ratio=topk_ratio,
        dropout_rate=dropout_rate,
        aggregation=aggregation,
    )


def _head_logits(h: Tensor, w: Tensor, a: Tensor, adj: Adjacency, slope: float) -> Tensor:
    hw = T.matmul(h, w)
    d_head = w.cols
    src_score = T.matmul(hw, T.slice_rows(a, 0, d_head))
    dst_score = T.matmul(hw, T.slice_rows(a, d_head, 2 * d_head))
    per_edge = T.add(T.gather_rows(src_score, adj.src), T.gather_rows(dst_score, adj.col))
    return T.leaky_relu(per_edge, slope)


def attention_logits(h: Tensor, params: GatLayerParams, adj: Adjacency) -> list[Tensor]:
    """Unnormalized per-edge coefficients e_ij for every head.

    Edge order follows the adjacency: sorted by center node, then neighbor.
    """
    return [
        _head_logits(h, w, a, adj, params.leaky_slope)
        for w, a in zip(params.weights, params.att_vectors)
    ]


def normalize_attention(e: Tensor, adj: Adjacency) -> Tensor:
    """Softmax of per-edge logits over each center node's neighborhood.

    The per-neighborhood max is subtracted before exponentiation; softmax is
    shift-invariant, so the result is mathematically unchanged.
    """
    if e.shape != (adj.num_edges, 1):
        raise ShapeError(f"expected {adj.num_edges}x1 edge logits, got {e.shape}")
    seg_max = np.maximum.reduceat(e.data, adj.row_ptr[:-1], axis=0)
    z = T.exp(T.sub(e, T.constant(np.repeat(seg_max, adj.degrees, axis=0))))
    denom = T.segment_sum(z, adj.row_ptr)
    return T.div(z, T.gather_rows(denom, adj.src))


def _coefficient_mask(alpha: np.ndarray, adj: Adjacency, ratio: float) -> np.ndarray:
    mask = np.zeros_like(alpha)
    for i in range(adj.num_nodes):
        start, stop = adj.row_ptr[i], adj.row_ptr[i + 1]
        deg = stop - start
        k = math.ceil(ratio * deg)
        segment = alpha[start:stop, 0]
        cols = adj.col[start:stop]
        # largest coefficient first; ties go to the lower neighbor index
        order = np.lexsort((cols, -segment))
        mask[start + order[:k], 0] = 1.0
    return mask


def _node_mask(alpha: np.ndarray, adj: Adjacency, ratio: float, graph_ids: np.ndarray) -> np.ndarray:
    received = np.zeros(adj.num_nodes)
    np.add.at(received, adj.col, alpha[:, 0])
    keep = np.zeros(adj.num_nodes, dtype=bool)
    for g in np.unique(graph_ids):
        nodes = np.flatnonzero(graph_ids == g)
        k = math.ceil(ratio * len(nodes))
        order = np.lexsort((nodes, -received[nodes]))
        keep[nodes[order[:k]]] = True
    return keep[adj.col].astype(np.float64).reshape(-1, 1)


def topk_mask(
    alpha: Tensor,
    adj: Adjacency,
    ratio: float,
    mode: str = "coefficient",
    graph_ids: np.ndarray | None = None,
) -> Tensor:
    """Keep each node's ceil(ratio * |N_i|) largest coefficients, renormalized.

    The selection mask is constant during backward (straight-through on the
    survivors).  `mode="node"` instead drops whole nodes by total received
    attention per graph, which can zero a row entirely; such rows stay zero.
    """
    if not 0.0 < ratio <= 1.0:
        raise ShapeError("topk ratio must be in (0, 1]")
    if ratio >= 1.0:
        return alpha
    if mode == "coefficient":
        mask = _coefficient_mask(alpha.data, adj, ratio)
    elif mode == "node":
        if graph_ids is None:
            graph_ids = np.zeros(adj.num_nodes, dtype=np.int64)
        mask = _node_mask(alpha.data, adj, ratio, graph_ids)
    else:
        raise ShapeError(f"unknown topk mode '{mode}'")
    kept = T.mul(alpha, T.constant(mask))
    denom = T.segment_sum(kept, adj.row_ptr)
    zero_rows = (denom.data == 0.0).astype(np.float64)
    safe = T.add(denom, T.constant(zero_rows))
    return T.div(kept, T.gather_rows(safe, adj.src))


def aggregate_heads(
    h: Tensor,
    alphas: list[Tensor],
    params: GatLayerParams,
    adj: Adjacency,
    elu_alpha: float = 1.0,
) -> Tensor:
    """Per-head attention-weighted neighbor sums, concatenated or averaged,
    then passed through the ELU."""
    if len(alphas) != params.heads:
        raise ShapeError("one attention column per head required")
    messages = []
    for w, alpha in zip(params.weights, alphas):
        hw = T.matmul(h, w)
        weighted = T.mul_rows(T.gather_rows(hw, adj.col), alpha)
        messages.append(T.segment_sum(weighted, adj.row_ptr))
    if params.aggregation == "concat":
        combined = T.concat_cols(messages)
    else:
        combined = messages[0]
        for m in messages[1:]:
            combined = T.add(combined, m)
        combined = T.scale(combined, 1.0 / params.heads)
    return T.elu(combined, elu_alpha)


def apply_dropout(t: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero entries with probability `rate` and scale the
    survivors by 1/(1-rate); identity outside training."""
    if not training or rate <= 0.0:
        return t
    if rng is None:
        raise ShapeError("training-mode dropout needs a random generator")
    mask = (rng.random(t.shape) >= rate) / (1.0 - rate)
    return T.mul(t, T.constant(mask))


def gat_layer(
    h: Tensor,
    params: GatLayerParams,
    adj: Adjacency,
    training: bool = False,
    rng: np.random.Generator | None = None,
    apply_topk: bool = True,
    topk_mode: str = "coefficient",
    graph_ids: np.ndarray | None = None,
    elu_alpha: float = 1.0,
) -> Tensor:
    """One full layer: feature dropout, attention, top-k pooling, attention
    dropout, and head aggregation."""
    h = apply_dropout(h, params.dropout_rate, rng, training)
    logits = attention_logits(h, params, adj)
    alphas = [normalize_attention(e, adj) for e in logits]
    if apply_topk:
        alphas = [topk_mask(a, adj, params.topk_ratio, topk_mode, graph_ids) for a in alphas]
    alphas = [apply_dropout(a, params.dropout_rate, rng, training) for a in alphas]
    return aggregate_heads(h, alphas, params, adj, elu_alpha)
