"""Shared helpers: finite-difference gradient oracle and random graph makers."""

from __future__ import annotations

import numpy as np

from magic.graphs import Adjacency, InteractionGraph, NodeKind


def numeric_gradient(f, arrays, eps=1e-5):
    """Central finite differences of the scalar f() w.r.t. each array.

    f must read the arrays in place (they are perturbed and restored), so the
    oracle never touches the code path that produced the analytic gradients.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f()
            flat[i] = orig - eps
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric, floor=1e-5):
    """Worst-case relative error, with a floor so FD noise on near-zero
    gradients is measured absolutely (central differences resolve ~1e-10)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def dense_gat_reference(h, weights, att_vectors, dense_adj, slope=0.2, topk_ratio=0.8,
                        aggregation="concat", elu_alpha=1.0, apply_topk=True):
    """Brute-force attention layer over a dense adjacency, used as an oracle.

    Pure numpy loops, independent of the tape-based implementation: per head,
    per node, it scores every neighbor, softmaxes, applies the top-k rule with
    ties to the lower neighbor index, renormalizes, and aggregates.
    """
    import math

    n = h.shape[0]
    heads = []
    for w, a in zip(weights, att_vectors):
        hw = h @ w
        out = np.zeros((n, w.shape[1]))
        for i in range(n):
            nbrs = [j for j in range(n) if dense_adj[i, j]]
            raw = []
            for j in nbrs:
                z = float(np.concatenate([hw[i], hw[j]]) @ a[:, 0])
                raw.append(z if z >= 0 else slope * z)
            raw = np.array(raw)
            ex = np.exp(raw - raw.max())
            alpha = ex / ex.sum()
            if apply_topk and topk_ratio < 1.0:
                k = math.ceil(topk_ratio * len(nbrs))
                order = sorted(range(len(nbrs)), key=lambda t: (-alpha[t], nbrs[t]))
                keep = set(order[:k])
                alpha = np.array([alpha[t] if t in keep else 0.0 for t in range(len(nbrs))])
                alpha = alpha / alpha.sum()
            for t, j in enumerate(nbrs):
                out[i] += alpha[t] * hw[j]
        heads.append(out)
    combined = np.hstack(heads) if aggregation == "concat" else sum(heads) / len(heads)
    return np.where(combined > 0, combined, elu_alpha * np.expm1(np.minimum(combined, 0.0)))


def random_adjacency(rng, n_nodes, edge_prob=0.4):
    """Random symmetric adjacency with self-loops on every node."""
    pairs = []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < edge_prob:
                pairs.append((i, j))
    return Adjacency.from_undirected(n_nodes, pairs)


def random_graph(rng, n_nodes, dim, label=0, edge_prob=0.4):
    """Random interaction graph: node 0 is the post, the rest are comments."""
    adj = random_adjacency(rng, n_nodes, edge_prob)
    features = rng.uniform(-2.0, 2.0, size=(n_nodes, dim))
    kinds = [NodeKind.POST] + [NodeKind.COMMENT] * (n_nodes - 1)
    return InteractionGraph(node_features=features, node_kinds=kinds, adjacency=adj, label=label)


def depth_probe_graphs(n_per_class, dim=12):
    """Graphs a depth-1 network provably cannot separate but depth 2 can.

    Both classes have an isolated post node and six comment nodes colored
    (a, a, b, a, b, b); class 0 wires the comments into one 6-cycle, class 1
    into the triangles (a, a, b) and (a, b, b).  The multiset of radius-1
    neighborhoods (center color plus neighbor colors, self-loops included) is
    then identical across classes, so any single round of neighborhood
    attention followed by mean readout yields class-independent logits, while
    the radius-2 unfoldings differ and two rounds can separate.  Classes
    alternate so every prefix is balanced.
    """
    palette = np.zeros((3, dim))
    palette[0, 0] = palette[1, 1] = palette[2, 2] = 1.0
    post, a, b = palette
    features = np.vstack([post, a, a, b, a, b, b])
    ring = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1)]
    triangles = [(1, 2), (2, 3), (3, 1), (4, 5), (5, 6), (6, 4)]
    kinds = [NodeKind.POST] + [NodeKind.COMMENT] * 6
    graphs = []
    for _ in range(n_per_class):
        for label, edges in ((0, ring), (1, triangles)):
            graphs.append(
                InteractionGraph(
                    node_features=features.copy(),
                    node_kinds=list(kinds),
                    adjacency=Adjacency.from_undirected(7, edges),
                    label=label,
                )
            )
    return graphs
