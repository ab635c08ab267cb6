"""Dataset parsing, interaction-graph construction, batching, and splits.

Each record becomes one graph: the post embedding is a node, the image
embedding is a node (all-zero when the record has no image), and every
comment embedding is a node.  Edges form a star around the post, are
undirected, and every node carries a self-loop so it can attend to itself.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import store as store_mod
from .store import EmbeddingStore


class DatasetError(Exception):
    """Malformed datasets, schemas, or graph construction failures."""


class NodeKind(enum.Enum):
    POST = "post"
    IMAGE = "image"
    COMMENT = "comment"


class Adjacency:
    """Symmetric adjacency with self-loops, as CSR-style neighbor lists."""

    __slots__ = ("row_ptr", "col")

    def __init__(self, row_ptr: np.ndarray, col: np.ndarray):
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col = np.asarray(col, dtype=np.int64)

    @classmethod
    def from_undirected(cls, n_nodes: int, pairs) -> "Adjacency":
        """Build from undirected node pairs; self-loops are added implicitly."""
        neighbors = [{i} for i in range(n_nodes)]
        for i, j in pairs:
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise DatasetError(f"edge ({i},{j}) out of range for {n_nodes} nodes")
            neighbors[i].add(j)
            neighbors[j].add(i)
        row_ptr = np.zeros(n_nodes + 1, dtype=np.int64)
        cols = []
        for i, ns in enumerate(neighbors):
            ordered = sorted(ns)
            cols.extend(ordered)
            row_ptr[i + 1] = row_ptr[i] + len(ordered)
        return cls(row_ptr, np.asarray(cols, dtype=np.int64))

    @property
    def num_nodes(self) -> int:
        return len(self.row_ptr) - 1

    @property
    def num_edges(self) -> int:
        """Directed edge count, self-loops included."""
        return int(self.row_ptr[-1])

    @property
    def src(self) -> np.ndarray:
        """Source node of every directed edge, aligned with `col`."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.col[self.row_ptr[i]:self.row_ptr[i + 1]]

    def validate(self) -> None:
        edges = set(zip(self.src.tolist(), self.col.tolist()))
        for i in range(self.num_nodes):
            if (i, i) not in edges:
                raise DatasetError(f"node {i} is missing its self-loop")
        for i, j in edges:
            if (j, i) not in edges:
                raise DatasetError(f"edge ({i},{j}) has no reverse edge")

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        dense[self.src, self.col] = True
        return dense

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Adjacency)
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col, other.col)
        )


@dataclass
class MultimodalRecord:
    id: str
    label: int
    post_text: str
    comments: list[str] = field(default_factory=list)
    image_ref: str | None = None


@dataclass
class DatasetSchema:
    """Label vocabulary in class-index order."""

    labels: list[str]

    def __post_init__(self):
        if not self.labels:
            raise DatasetError("schema has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise DatasetError("schema labels are not unique")
        self._to_index = {name: i for i, name in enumerate(self.labels)}

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def index_of(self, name: str) -> int:
        idx = self._to_index.get(name)
        if idx is None:
            raise DatasetError(f"unknown label '{name}'")
        return idx


def load_schema(path) -> DatasetSchema:
    """Schema file: one label string per line, in class-index order."""
    with open(path, "r", encoding="utf-8") as fh:
        labels = [line.strip() for line in fh if line.strip()]
    return DatasetSchema(labels)


def parse_record(obj: dict, schema: DatasetSchema | None, line_no: int = 0) -> MultimodalRecord:
    where = f"line {line_no}: " if line_no else ""
    if not isinstance(obj, dict):
        raise DatasetError(f"{where}record is not a JSON object")
    for name, kind in (("id", str), ("text", str)):
        if not isinstance(obj.get(name), kind):
            raise DatasetError(f"{where}missing or invalid field '{name}'")
    comments = obj.get("comments", [])
    if not isinstance(comments, list) or not all(isinstance(c, str) for c in comments):
        raise DatasetError(f"{where}'comments' must be an array of strings")
    image = obj.get("image")
    if image is not None and not isinstance(image, str):
        raise DatasetError(f"{where}'image' must be a string key or null")
    raw_label = obj.get("label")
    if schema is None:
        label = -1  # unlabeled; prediction-only records need no schema
    else:
        if not isinstance(raw_label, str):
            raise DatasetError(f"{where}missing or invalid field 'label'")
        try:
            label = schema.index_of(raw_label)
        except DatasetError as exc:
            raise DatasetError(f"{where}{exc}") from None
    return MultimodalRecord(
        id=obj["id"], label=label, post_text=obj["text"], comments=list(comments), image_ref=image
    )


def parse_dataset(path, schema: DatasetSchema | None) -> list[MultimodalRecord]:
    """Parse a JSON-lines dataset; labels are mapped through the schema.

    Without a schema every record is parsed as unlabeled (label -1), which is
    what embedding export and prediction need.
    """
    records: list[MultimodalRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from None
            record = parse_record(obj, schema, line_no)
            if record.id in seen:
                raise DatasetError(f"line {line_no}: duplicate id '{record.id}'")
            seen.add(record.id)
            records.append(record)
    return records


@dataclass
class InteractionGraph:
    node_features: np.ndarray
    node_kinds: list[NodeKind]
    adjacency: Adjacency
    label: int

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        n = len(self.node_kinds)
        if self.node_features.shape[0] != n:
            raise DatasetError("feature row count does not match node count")
        if self.adjacency.num_nodes != n:
            raise DatasetError("adjacency size does not match node count")
        if sum(k is NodeKind.POST for k in self.node_kinds) != 1:
            raise DatasetError("graph must contain exactly one post node")
        if sum(k is NodeKind.IMAGE for k in self.node_kinds) > 1:
            raise DatasetError("graph may contain at most one image node")

    @property
    def num_nodes(self) -> int:
        return len(self.node_kinds)

    @property
    def dim(self) -> int:
        return self.node_features.shape[1]


def build_graph(
    record: MultimodalRecord,
    store: EmbeddingStore,
    dim: int,
    include_image: bool = True,
    comment_edges: str = "star",
) -> InteractionGraph:
    """Embed one record into its interaction graph.

    Star topology: the post connects to the image node (when present) and to
    every comment.  `comment_edges="chain"` instead threads comments into a
    reply chain post - c0 - c1 - ...  A record without an image still gets an
    image node with all-zero features unless include_image is False.
    """
    if store.dim != dim:
        raise DatasetError(f"store dim {store.dim} does not match requested dim {dim}")
    if comment_edges not in ("star", "chain"):
        raise DatasetError(f"unknown comment_edges mode '{comment_edges}'")

    def resolve(key: str) -> np.ndarray:
        try:
            return store.lookup(key)
        except KeyError:
            raise DatasetError(f"embedding missing for key '{key}'") from None

    rows = [resolve(store_mod.post_key(record.id))]
    kinds = [NodeKind.POST]
    pairs: list[tuple[int, int]] = []
    if include_image:
        if record.image_ref is not None:
            rows.append(resolve(store_mod.image_key(record.image_ref)))
        else:
            rows.append(np.zeros(dim))
        kinds.append(NodeKind.IMAGE)
        pairs.append((0, 1))
    first_comment = len(rows)
    for ordinal in range(len(record.comments)):
        rows.append(resolve(store_mod.comment_key(record.id, ordinal)))
        kinds.append(NodeKind.COMMENT)
    for k in range(len(record.comments)):
        node = first_comment + k
        if comment_edges == "star" or k == 0:
            pairs.append((0, node))
        else:
            pairs.append((node - 1, node))
    adjacency = Adjacency.from_undirected(len(rows), pairs)
    return InteractionGraph(
        node_features=np.vstack(rows),
        node_kinds=kinds,
        adjacency=adjacency,
        label=record.label,
    )


@dataclass
class GraphBatch:
    node_features: np.ndarray
    adjacency: Adjacency
    graph_offsets: np.ndarray
    node_counts: np.ndarray
    labels: np.ndarray

    @property
    def num_graphs(self) -> int:
        return len(self.graph_offsets)

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def graph_ids(self) -> np.ndarray:
        """Graph index of every node."""
        return np.repeat(np.arange(self.num_graphs, dtype=np.int64), self.node_counts)

    def pooling_matrix(self) -> np.ndarray:
        """num_graphs x num_nodes matrix averaging each graph's node rows."""
        pool = np.zeros((self.num_graphs, self.num_nodes), dtype=np.float64)
        for g, (start, count) in enumerate(zip(self.graph_offsets, self.node_counts)):
            pool[g, start:start + count] = 1.0 / count
        return pool


def batch(graphs: list[InteractionGraph]) -> GraphBatch:
    """Block-diagonal merge; neighborhoods never cross graph boundaries."""
    if not graphs:
        raise DatasetError("cannot batch an empty graph list")
    dim = graphs[0].dim
    if any(g.dim != dim for g in graphs):
        raise DatasetError("graphs have mismatched feature dimensions")
    offsets = np.zeros(len(graphs), dtype=np.int64)
    counts = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    row_ptr_parts = [np.array([0], dtype=np.int64)]
    col_parts = []
    edge_base = 0
    for g, offset in zip(graphs, offsets):
        row_ptr_parts.append(g.adjacency.row_ptr[1:] + edge_base)
        col_parts.append(g.adjacency.col + offset)
        edge_base += g.adjacency.num_edges
    return GraphBatch(
        node_features=np.vstack([g.node_features for g in graphs]),
        adjacency=Adjacency(np.concatenate(row_ptr_parts), np.concatenate(col_parts)),
        graph_offsets=offsets,
        node_counts=counts,
        labels=np.array([g.label for g in graphs], dtype=np.int64),
    )


def _stratified_take(pools: dict[int, list], fraction: float, class_order: list[int]):
    """Pull round(fraction * total) items, spread per class by largest remainder."""
    total = sum(len(pool) for pool in pools.values())
    target = round(fraction * total)
    quota = {c: fraction * len(pool) for c, pool in pools.items()}
    take = {c: min(math.floor(q), len(pools[c])) for c, q in quota.items()}
    leftover = target - sum(take.values())
    by_remainder = sorted(class_order, key=lambda c: (-(quota[c] - take[c]), c))
    for c in by_remainder:
        if leftover <= 0:
            break
        if take[c] < len(pools[c]):
            take[c] += 1
            leftover -= 1
    taken, rest = {}, {}
    for c, pool in pools.items():
        taken[c] = pool[:take[c]]
        rest[c] = pool[take[c]:]
    return taken, rest


def split_dataset(records, seed: int = 0, test_ratio: float = 0.2, val_ratio: float = 0.2):
    """Stratified (train, validation, test) split.

    The test partition takes `test_ratio` of all records, then the validation
    partition takes `val_ratio` of the remaining pool, per class by largest
    remainder so every split stays within one record of the class proportion.
    """
    if not records:
        raise DatasetError("cannot split an empty dataset")
    pools: dict[int, list] = {}
    for record in records:
        pools.setdefault(record.label, []).append(record)
    for label, pool in sorted(pools.items()):
        if len(pool) < 3:
            raise DatasetError(f"class {label} has {len(pool)} records, fewer than the 3 partitions")
    rng = np.random.default_rng(seed)
    class_order = sorted(pools)
    for label in class_order:
        pool = pools[label]
        perm = rng.permutation(len(pool))
        pools[label] = [pool[i] for i in perm]
    test_taken, rest = _stratified_take(pools, test_ratio, class_order)
    val_taken, train_rest = _stratified_take(rest, val_ratio, class_order)

    def flatten(parts):
        out = []
        for label in class_order:
            out.extend(parts[label])
        return out

    return flatten(train_rest), flatten(val_taken), flatten(test_taken)
