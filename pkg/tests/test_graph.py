import os
import shutil

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egae.graph import (DatasetError, SparseGraph, gen_two_rings, load_dataset, load_dir,
                        renormalized_laplacian, unnormalized_laplacian, write_csv_triple)

from conftest import random_graph


def single_edge():
    return SparseGraph.from_edges(2, [0], [1])


def triangle():
    return SparseGraph.from_edges(3, [0, 1, 2], [1, 2, 0])


def dense_renormalized(a):
    # direct evaluation of D^-1/2 (I + A) D^-1/2
    a_hat = a + np.eye(a.shape[0])
    d = a_hat.sum(axis=1)
    return a_hat / np.sqrt(np.outer(d, d))


class TestSparseGraph:
    def test_symmetrized_deduplicated_no_self_loops(self):
        g = SparseGraph.from_edges(4, [0, 1, 0, 2, 3], [1, 0, 1, 2, 0])
        g.validate()
        assert g.edge_set() == {(0, 1), (0, 3)}
        assert g.num_edges == 2
        assert np.all(g.data == 1.0)

    def test_zero_weights_dropped(self):
        g = SparseGraph.from_edges(3, [0, 1], [1, 2], weights=[0.0, 2.0])
        assert g.edge_set() == {(1, 2)}
        assert g.dense()[1, 2] == 2.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            SparseGraph.from_edges(2, [0], [2])

    def test_from_dense_reports_asymmetry(self):
        g = SparseGraph.from_dense(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert not g.is_symmetric
        with pytest.raises(ValueError):
            renormalized_laplacian(g)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 30), st.floats(0.0, 1.0), st.integers(0, 10_000))
    def test_random_graphs_satisfy_invariants(self, n, p, seed):
        g = random_graph(n, p, np.random.default_rng(seed))
        g.validate()
        a = g.dense()
        assert np.array_equal(a, a.T)
        assert np.all(np.diag(a) == 0)


class TestLaplacians:
    def test_single_edge(self):
        assert np.allclose(renormalized_laplacian(single_edge()).toarray(), 0.5, atol=1e-15)

    def test_single_node(self):
        g = SparseGraph.from_edges(1, [], [])
        assert renormalized_laplacian(g).toarray().tolist() == [[1.0]]

    def test_triangle(self):
        assert np.allclose(renormalized_laplacian(triangle()).toarray(), 1.0 / 3.0, atol=1e-15)

    def test_isolated_node_keeps_unit_self_loop(self):
        g = SparseGraph.from_edges(3, [0], [1])
        lap = renormalized_laplacian(g).toarray()
        assert lap[2, 2] == 1.0
        assert lap[2, :2].tolist() == [0.0, 0.0]

    def test_sparsity_pattern(self):
        g = random_graph(20, 0.2, np.random.default_rng(3))
        lap = renormalized_laplacian(g).toarray()
        support = (g.dense() + np.eye(20)) > 0
        assert np.array_equal(lap > 0, support)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 50), st.floats(0.0, 1.0), st.integers(0, 10_000))
    def test_matches_dense_formula_and_spectrum(self, n, p, seed):
        g = random_graph(n, p, np.random.default_rng(seed))
        lap = renormalized_laplacian(g).toarray()
        assert np.allclose(lap, dense_renormalized(g.dense()), atol=1e-14)
        assert np.array_equal(lap, lap.T)
        w = np.linalg.eigvalsh(lap)
        assert w.max() <= 1 + 1e-8
        assert w.min() >= -1 - 1e-8

    def test_unnormalized_examples(self):
        assert unnormalized_laplacian(single_edge()).toarray().tolist() == [[1, -1], [-1, 1]]
        assert not unnormalized_laplacian(SparseGraph.from_edges(3, [], [])).toarray().any()
        tri = unnormalized_laplacian(triangle()).toarray()
        assert np.array_equal(tri, 3 * np.eye(3) - np.ones((3, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 30), st.floats(0.0, 1.0), st.integers(0, 10_000))
    def test_unnormalized_psd_zero_rows(self, n, p, seed):
        g = random_graph(n, p, np.random.default_rng(seed))
        lap = unnormalized_laplacian(g).toarray()
        assert np.allclose(lap.sum(axis=1), 0.0)
        assert np.linalg.eigvalsh(lap).min() >= -1e-10


class TestLoaders:
    def test_csv_triple_toy(self, data_dir):
        ds = load_dir(os.path.join(data_dir, "toy"), "csv-triple")
        assert ds.n == 2 and ds.c == 2
        assert ds.graph.edge_set() == {(0, 1)}
        assert ds.graph.is_symmetric
        assert ds.label_names == ["blue", "red"]
        assert ds.labels.tolist() == [1, 0]

    def test_content_cites(self, data_dir):
        ds = load_dir(os.path.join(data_dir, "mini"))
        ds.graph.validate()
        assert ds.node_ids == ["p1", "p2", "p3", "p4"]
        # p1 appears twice; the later row wins
        assert ds.features[0].tolist() == [1.0, 1.0, 0.0]
        assert ds.graph.edge_set() == {(0, 1), (1, 2), (0, 3)}
        assert ds.label_names == ["AI", "ML", "Theory"]
        assert ds.labels.tolist() == [2, 0, 2, 1]

    def test_idempotent(self, data_dir):
        a = load_dir(os.path.join(data_dir, "mini"))
        b = load_dir(os.path.join(data_dir, "mini"))
        for f in ("indptr", "indices", "data"):
            assert getattr(a.graph, f).tobytes() == getattr(b.graph, f).tobytes()
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_dangling_endpoint(self, tmp_path, data_dir):
        shutil.copytree(os.path.join(data_dir, "mini"), tmp_path / "mini")
        with open(tmp_path / "mini" / "mini.cites", "a") as fh:
            fh.write("p2\tghost\n")
        with pytest.raises(DatasetError, match="ghost"):
            load_dir(tmp_path / "mini")
        ds = load_dir(tmp_path / "mini", drop_dangling=True)
        assert ds.graph.num_edges == 3

    def test_malformed_line_number(self, tmp_path):
        (tmp_path / "x.content").write_text("a\t1\t0\tL\nb\t1\tL\n")
        (tmp_path / "x.cites").write_text("a\tb\n")
        with pytest.raises(DatasetError, match=r"x.content:2"):
            load_dir(tmp_path)

    def test_bad_edge_line(self, tmp_path):
        (tmp_path / "x.content").write_text("a\t1\tL\nb\t0\tL\n")
        (tmp_path / "x.cites").write_text("a\tb\na\n")
        with pytest.raises(DatasetError, match=r"x.cites:2"):
            load_dir(tmp_path)

    def test_missing_file_named(self, tmp_path):
        (tmp_path / "nodes.csv").write_text("id,x0\na,1\n")
        with pytest.raises(DatasetError, match="edges.csv"):
            load_dataset(tmp_path / "nodes.csv", tmp_path / "edges.csv", "csv-triple")

    def test_missing_label(self, tmp_path, data_dir):
        shutil.copytree(os.path.join(data_dir, "toy"), tmp_path / "toy")
        (tmp_path / "toy" / "labels.csv").write_text("id,label\na,red\n")
        with pytest.raises(DatasetError, match="'b'"):
            load_dir(tmp_path / "toy", "csv-triple")

    def test_weighted_edges(self, tmp_path, data_dir):
        shutil.copytree(os.path.join(data_dir, "toy"), tmp_path / "toy")
        (tmp_path / "toy" / "edges.csv").write_text("src,dst,w\na,b,0.25\n")
        ds = load_dir(tmp_path / "toy", "csv-triple")
        assert ds.graph.data.tolist() == [1.0, 1.0]
        ds = load_dir(tmp_path / "toy", "csv-triple", keep_weights=True)
        assert ds.graph.data.tolist() == [0.25, 0.25]

    def test_unknown_format(self, data_dir):
        with pytest.raises(DatasetError):
            load_dataset(os.path.join(data_dir, "toy", "nodes.csv"), os.path.join(data_dir, "toy", "edges.csv"), "npz")

    def test_csv_round_trip(self, tmp_path):
        ds = gen_two_rings(10, 0.7, seed=4)
        write_csv_triple(ds, tmp_path)
        back = load_dir(tmp_path, "csv-triple")
        assert np.array_equal(back.features, ds.features)
        assert back.graph.edge_set() == ds.graph.edge_set()
        assert np.array_equal(back.labels, ds.labels)


class TestTwoRings:
    def test_complete_within_clusters(self):
        ds = gen_two_rings(20, 1.0, seed=0)
        a = ds.graph.dense()
        same = ds.labels[:, None] == ds.labels[None, :]
        assert np.all(a[same & ~np.eye(40, dtype=bool)] == 1.0)
        assert not a[~same].any()

    @pytest.mark.parametrize("seed", range(10))
    def test_no_cross_edges(self, seed):
        ds = gen_two_rings(30, 0.5, seed)
        a = ds.graph.dense()
        assert not a[ds.labels[:, None] != ds.labels[None, :]].any()

    def test_edge_count_matches_binomial(self):
        pairs = 100 * 99 // 2
        counts = [gen_two_rings(100, 0.9, s).graph.num_edges / 2 for s in range(30)]
        mean = np.mean(counts)
        # the mean over 30 seeds of a per-ring Binomial(pairs, 0.9) count
        sd_of_mean = np.sqrt(pairs * 0.9 * 0.1 / 2) / np.sqrt(30)
        assert abs(mean - 0.9 * pairs) <= 3 * sd_of_mean

    def test_geometry(self):
        ds = gen_two_rings(200, 0.9, seed=1)
        r = np.linalg.norm(ds.features, axis=1)
        assert abs(r[ds.labels == 0].mean() - 1.0) < 0.02
        assert abs(r[ds.labels == 1].mean() - 2.0) < 0.02

    def test_deterministic(self):
        a, b = gen_two_rings(50, 0.9, 7), gen_two_rings(50, 0.9, 7)
        assert a.graph.edge_set() == b.graph.edge_set()
        assert np.array_equal(a.features, b.features)
        assert a.graph.edge_set() != gen_two_rings(50, 0.9, 8).graph.edge_set()

    @pytest.mark.parametrize("kw", [dict(n_per_ring=1), dict(p_intra=0.0), dict(p_intra=1.5)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            gen_two_rings(**kw)
