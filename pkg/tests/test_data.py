import numpy as np
import pytest

from conftest import write_tu_corpus
from kograph.data import (LoadError, ValidationError, build_batch,
                          graph_from_edges, khop_nodes, load_tu_dataset,
                          save_tu_dataset, split_dataset)
from kograph.testing import complete_graph, random_graph, synthetic_two_class_dataset


def path_graph(n, d=1):
    X = np.arange(n * d, dtype=float).reshape(n, d)
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)], X)


class TestLoad:
    def test_hand_corpus(self, tiny_corpus):
        ds = load_tu_dataset(tiny_corpus, "TINY")
        assert len(ds) == 1
        g = ds.graphs[0]
        assert g.n == 3 and g.num_edges == 2
        assert ds.d == 2  # one-hot of 2 node label values
        assert np.array_equal(g.X, [[1, 0], [0, 1], [1, 0]])
        assert ds.num_classes == 1

    def test_missing_file(self, tmp_path):
        (tmp_path / "EMPTY").mkdir()
        with pytest.raises(LoadError, match="graph_indicator"):
            load_tu_dataset(str(tmp_path), "EMPTY")

    def test_dangling_index(self, tmp_path):
        root = write_tu_corpus(tmp_path, "BAD", edges=[(1, 5), (5, 1)],
                               graph_of_node=[1, 1], graph_labels=[0])
        with pytest.raises(ValidationError, match="line 1"):
            load_tu_dataset(root, "BAD")

    def test_asymmetric_edges(self, tmp_path):
        root = write_tu_corpus(tmp_path, "ASYM", edges=[(1, 2)],
                               graph_of_node=[1, 1], graph_labels=[0])
        with pytest.raises(ValidationError, match="no reverse"):
            load_tu_dataset(root, "ASYM")

    def test_duplicate_edges_warn(self, tmp_path):
        root = write_tu_corpus(tmp_path, "DUP",
                               edges=[(1, 2), (2, 1), (1, 2)],
                               graph_of_node=[1, 1], graph_labels=[0])
        with pytest.warns(UserWarning, match="deduplicated"):
            ds = load_tu_dataset(root, "DUP")
        assert ds.graphs[0].num_edges == 1

    def test_labels_and_attributes_concat(self, tmp_path):
        root = write_tu_corpus(tmp_path, "MIX", edges=[(1, 2), (2, 1)],
                               graph_of_node=[1, 1], graph_labels=[0],
                               node_labels=[5, 7],
                               node_attrs=[[0.25], [0.5]])
        ds = load_tu_dataset(root, "MIX")
        assert ds.d == 3  # 2 one-hot columns then 1 attribute column
        assert np.allclose(ds.graphs[0].X, [[1, 0, 0.25], [0, 1, 0.5]])

    def test_round_trip(self, tmp_path):
        ds = synthetic_two_class_dataset(8, seed=3)
        save_tu_dataset(ds, str(tmp_path), "RT")
        back = load_tu_dataset(str(tmp_path), "RT")
        assert len(back) == len(ds)
        for a, b in zip(ds.graphs, back.graphs):
            assert a.n == b.n
            assert np.array_equal(a.edge_pairs(), b.edge_pairs())
            assert np.allclose(a.X, b.X)
            assert a.y == b.y


class TestKhop:
    def test_path_one_hop(self):
        g = path_graph(3)
        assert np.array_equal(khop_nodes(g, 0, 1), [0, 1])

    def test_zero_hop_is_center(self):
        g = path_graph(5)
        assert np.array_equal(khop_nodes(g, 3, 0), [3])

    def test_complete_graph_saturates(self):
        g = complete_graph(5)
        for i in range(5):
            for k in (1, 2, 4):
                assert np.array_equal(khop_nodes(g, i, k), np.arange(5))

    def test_monotone_neighborhoods(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            g = random_graph(rng, int(rng.integers(2, 15)), p=0.3)
            for i in range(g.n):
                prev = set()
                for k in range(5):
                    cur = set(khop_nodes(g, i, k).tolist())
                    assert prev <= cur
                    prev = cur
                assert len(khop_nodes(g, i, g.n)) == len(khop_nodes(g, i, g.n + 3))


class TestBatch:
    def test_two_paths(self):
        g = path_graph(2)
        b = build_batch([g, g])
        assert b.union.n == 4
        assert np.array_equal(b.union.edge_pairs(), [[0, 1], [2, 3]])
        assert (b.union.adj != b.union.adj.T).nnz == 0

    def test_single_graph_identity(self):
        g = path_graph(4)
        b = build_batch([g])
        assert np.array_equal(b.graph_id, np.zeros(4, dtype=int))
        assert np.array_equal(b.union.edge_pairs(), g.edge_pairs())
        assert np.allclose(b.union.X, g.X)

    def test_k3_plus_p2_graph_ids(self):
        k3 = complete_graph(3)
        p2 = path_graph(2, d=2)
        b = build_batch([k3, p2])
        assert np.array_equal(b.graph_id, [0, 0, 0, 1, 1])

    def test_slicing_recovers_members(self):
        rng = np.random.default_rng(1)
        graphs = [random_graph(rng, int(rng.integers(1, 9)), p=0.5)
                  for _ in range(4)]
        b = build_batch(graphs)
        for gi, g in enumerate(graphs):
            sl = b.member_slice(gi)
            assert np.allclose(b.union.X[sl], g.X)
            sub = b.union.adj[sl, :][:, sl]
            assert (sub != g.adj).nnz == 0

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            build_batch([])


class TestSplit:
    def test_sizes_1113(self):
        ds = synthetic_two_class_dataset(1113, seed=0, d=1)
        tr, va, te = split_dataset(ds, seed=0)
        assert (len(tr), len(va), len(te)) == (890, 111, 112)

    def test_sizes_10(self):
        ds = synthetic_two_class_dataset(10, seed=0, d=1)
        tr, va, te = split_dataset(ds, seed=5)
        assert (len(tr), len(va), len(te)) == (8, 1, 1)

    def test_deterministic_and_partition(self):
        ds = synthetic_two_class_dataset(57, seed=0, d=1)
        a = split_dataset(ds, seed=3)
        b = split_dataset(ds, seed=3)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)
        merged = np.sort(np.concatenate(a))
        assert np.array_equal(merged, np.arange(57))
