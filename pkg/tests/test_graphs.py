import json

import numpy as np
import pytest

from magic import store as store_mod
from magic.graphs import (
    Adjacency,
    DatasetError,
    DatasetSchema,
    MultimodalRecord,
    NodeKind,
    batch,
    build_graph,
    load_schema,
    parse_dataset,
    split_dataset,
)

MFND_LABELS = ["real", "fake", "uncertain"]


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def make_store(records, dim=8, seed=0):
    return store_mod.build_fallback_store(records, dim, seed)


class TestParsing:
    def test_three_class_schema_mapping(self, tmp_path):
        rows = [
            {"id": "a", "label": "real", "text": "x", "comments": [], "image": None},
            {"id": "b", "label": "fake", "text": "y", "comments": [], "image": None},
            {"id": "c", "label": "uncertain", "text": "z", "comments": [], "image": None},
        ]
        path = write_jsonl(tmp_path / "d.jsonl", rows)
        records = parse_dataset(path, DatasetSchema(MFND_LABELS))
        assert [r.label for r in records] == [0, 1, 2]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert parse_dataset(path, DatasetSchema(MFND_LABELS)) == []

    def test_optional_fields(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"id": "a", "label": "real", "text": "x"}])
        (record,) = parse_dataset(path, DatasetSchema(MFND_LABELS))
        assert record.comments == []
        assert record.image_ref is None

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"id": "a", "label": "real", "text": "x"}\n{broken\n')
        with pytest.raises(DatasetError, match="line 2"):
            parse_dataset(path, DatasetSchema(MFND_LABELS))

    def test_unknown_label(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [{"id": "a", "label": "bogus", "text": "x"}])
        with pytest.raises(DatasetError, match="unknown label"):
            parse_dataset(path, DatasetSchema(MFND_LABELS))

    def test_duplicate_id(self, tmp_path):
        rows = [
            {"id": "a", "label": "real", "text": "x"},
            {"id": "a", "label": "fake", "text": "y"},
        ]
        path = write_jsonl(tmp_path / "d.jsonl", rows)
        with pytest.raises(DatasetError, match="duplicate id"):
            parse_dataset(path, DatasetSchema(MFND_LABELS))

    def test_schema_file_roundtrip(self, tmp_path):
        path = tmp_path / "labels"
        path.write_text("real\nfake\nuncertain\n")
        schema = load_schema(path)
        assert schema.labels == MFND_LABELS
        assert schema.index_of("uncertain") == 2


class TestAdjacency:
    def test_self_loops_and_symmetry(self):
        adj = Adjacency.from_undirected(3, [(0, 1), (1, 2)])
        adj.validate()
        dense = adj.to_dense()
        assert np.array_equal(dense, dense.T)
        assert dense.diagonal().all()

    def test_edge_counts(self):
        adj = Adjacency.from_undirected(3, [(0, 1)])
        # 3 self-loops + 1 undirected edge in both directions
        assert adj.num_edges == 5
        assert list(adj.neighbors(0)) == [0, 1]


class TestBuildGraph:
    def test_full_record_counts(self):
        record = MultimodalRecord(
            id="r1", label=0, post_text="hello world", comments=["a b", "c d", "e f"], image_ref="img1"
        )
        store = make_store([record])
        graph = build_graph(record, store, store.dim)
        assert graph.num_nodes == 5
        # 4 undirected edges both ways + 5 self-loops
        assert graph.adjacency.num_edges == 13
        assert graph.node_kinds.count(NodeKind.POST) == 1
        assert graph.node_kinds.count(NodeKind.IMAGE) == 1
        assert graph.node_kinds.count(NodeKind.COMMENT) == 3

    def test_post_only_gets_zero_image_node(self):
        record = MultimodalRecord(id="r1", label=0, post_text="hello world")
        store = make_store([record])
        graph = build_graph(record, store, store.dim)
        assert graph.num_nodes == 2
        assert graph.node_kinds[1] is NodeKind.IMAGE
        assert np.all(graph.node_features[1] == 0.0)
        assert graph.adjacency.num_edges == 4  # 1 edge both ways + 2 self-loops

    def test_no_image_mode_drops_the_node(self):
        record = MultimodalRecord(id="r1", label=1, post_text="hello", comments=["x y"], image_ref="img")
        store = make_store([record])
        graph = build_graph(record, store, store.dim, include_image=False)
        assert NodeKind.IMAGE not in graph.node_kinds
        assert graph.num_nodes == 2

    def test_chain_mode_threads_comments(self):
        record = MultimodalRecord(id="r1", label=0, post_text="p", comments=["a", "b", "c"])
        store = make_store([record])
        graph = build_graph(record, store, store.dim, include_image=False, comment_edges="chain")
        dense = graph.adjacency.to_dense()
        assert dense[0, 1] and dense[1, 2] and dense[2, 3]
        assert not dense[0, 2] and not dense[0, 3]

    def test_missing_embedding_key(self):
        record = MultimodalRecord(id="r1", label=0, post_text="p", image_ref="img")
        store = store_mod.EmbeddingStore(8)
        store.add(store_mod.post_key("r1"), np.zeros(8))
        with pytest.raises(DatasetError, match="image:img"):
            build_graph(record, store, 8)

    def test_dimension_mismatch(self):
        record = MultimodalRecord(id="r1", label=0, post_text="p")
        store = make_store([record], dim=8)
        with pytest.raises(DatasetError, match="dim"):
            build_graph(record, store, 16)

    def test_determinism(self):
        record = MultimodalRecord(id="r1", label=0, post_text="p q r", comments=["s t"], image_ref="u")
        store = make_store([record])
        g1 = build_graph(record, store, store.dim)
        g2 = build_graph(record, store, store.dim)
        assert g1.node_features.tobytes() == g2.node_features.tobytes()
        assert g1.adjacency == g2.adjacency


class TestBatching:
    def test_single_graph(self):
        record = MultimodalRecord(id="r1", label=1, post_text="p", comments=["a"])
        store = make_store([record])
        graph = build_graph(record, store, store.dim)
        gb = batch([graph])
        assert list(gb.graph_offsets) == [0]
        np.testing.assert_array_equal(gb.node_features, graph.node_features)
        assert gb.adjacency == graph.adjacency
        assert list(gb.labels) == [1]

    def test_two_graph_offsets(self):
        records = [
            MultimodalRecord(id="r1", label=0, post_text="p", comments=["a"]),  # 3 nodes with image
            MultimodalRecord(id="r2", label=1, post_text="q"),  # 2 nodes with image
        ]
        store = make_store(records)
        graphs = [build_graph(r, store, store.dim) for r in records]
        gb = batch(graphs)
        assert list(gb.graph_offsets) == [0, 3]
        assert gb.node_features.shape == (5, store.dim)
        # no edge crosses the boundary
        src, col = gb.adjacency.src, gb.adjacency.col
        assert np.all((src < 3) == (col < 3))

    def test_empty_batch_rejected(self):
        with pytest.raises(DatasetError):
            batch([])

    def test_pooling_matrix_rows(self):
        records = [
            MultimodalRecord(id="r1", label=0, post_text="p", comments=["a"]),
            MultimodalRecord(id="r2", label=1, post_text="q"),
        ]
        store = make_store(records)
        gb = batch([build_graph(r, store, store.dim) for r in records])
        pool = gb.pooling_matrix()
        np.testing.assert_allclose(pool.sum(axis=1), 1.0)
        assert pool.shape == (2, 5)


def make_labeled_records(counts):
    records = []
    for label, count in enumerate(counts):
        for i in range(count):
            records.append(MultimodalRecord(id=f"{label}-{i}", label=label, post_text="t"))
    return records


class TestSplit:
    def test_default_ratio_counts(self):
        records = make_labeled_records([50, 50])
        train, val, test = split_dataset(records, seed=0)
        assert (len(train), len(val), len(test)) == (64, 16, 20)

    def test_same_seed_same_partition(self):
        records = make_labeled_records([40, 35, 25])
        first = split_dataset(records, seed=3)
        second = split_dataset(records, seed=3)
        for a, b in zip(first, second):
            assert [r.id for r in a] == [r.id for r in b]

    def test_partitions_disjoint_and_exhaustive(self):
        records = make_labeled_records([33, 41, 26])
        train, val, test = split_dataset(records, seed=1)
        ids = [r.id for r in train] + [r.id for r in val] + [r.id for r in test]
        assert len(ids) == len(records)
        assert len(set(ids)) == len(records)

    def test_stratification_within_one_record(self):
        records = make_labeled_records([30, 30, 30])
        train, val, test = split_dataset(records, seed=5)
        for part in (train, val, test):
            share = len(part) / len(records)
            for label in range(3):
                got = sum(r.label == label for r in part)
                assert abs(got - share * 30) <= 1.0

    def test_small_class_rejected(self):
        records = make_labeled_records([10, 2])
        with pytest.raises(DatasetError, match="fewer than"):
            split_dataset(records)
