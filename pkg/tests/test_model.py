import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egae.graph import SparseGraph, renormalized_laplacian
from egae.linalg import truncated_left_singular
from egae.model import (EncoderParams, GraphContext, LOG_EPS, class_weights, clustering_loss, encode,
                        glorot_limit, gradients, init_params, loss_and_grad, reconstruction_loss, total_loss)

from conftest import random_graph, small_dataset


def dense_forward(w1, w2, a, x):
    """Forward pass written out densely from the definitions."""
    a_hat = a + np.eye(a.shape[0])
    d = a_hat.sum(axis=1)
    lap = a_hat / np.sqrt(np.outer(d, d))
    h1 = np.maximum(lap @ x @ w1, 0)
    h2 = np.maximum(lap @ h1 @ w2, 0)
    norms = np.linalg.norm(h2, axis=1, keepdims=True)
    return np.where(norms > 1e-12, h2 / np.where(norms > 0, norms, 1), 0.0)


def dense_recon(z, a, weighting="balanced"):
    n = z.shape[0]
    t = a.copy()
    np.fill_diagonal(t, 1.0)
    pos = np.count_nonzero(t)
    w_pos, w_neg = {"balanced": (1.0, pos / (n * n - pos)), "none": (1.0, 1.0),
                    "positive": ((n * n - pos) / pos, 1.0)}[weighting]
    s = np.clip(z @ z.T, LOG_EPS, 1 - LOG_EPS)
    return np.mean(-(w_pos * t * np.log(s) + w_neg * (1 - t) * np.log(1 - s)))


def random_problem(seed, n=12, d=5, h=8, d_out=6, c=3):
    ds = small_dataset(n=n, d=d, seed=seed)
    params = init_params((d, h, d_out), seed)
    lap = renormalized_laplacian(ds.graph)
    z = encode(params, lap, ds.features).z
    p = truncated_left_singular(z, c).vectors
    return ds, params, lap, p


class TestInit:
    def test_shapes_and_bounds(self):
        p = init_params((1433, 256, 128), seed=0)
        assert p.w1.shape == (1433, 256) and p.w2.shape == (256, 128)
        assert np.abs(p.w1).max() <= glorot_limit(1433, 256)
        assert np.abs(p.w2).max() <= glorot_limit(256, 128)
        assert p.dims == (1433, 256, 128)

    def test_deterministic(self):
        a, b = init_params((5, 4, 3), 7), init_params((5, 4, 3), 7)
        assert a.w1.tobytes() == b.w1.tobytes() and a.w2.tobytes() == b.w2.tobytes()

    def test_rejects_zero_dims(self):
        with pytest.raises(ValueError):
            init_params((5, 0, 3))


class TestEncode:
    def test_hand_example(self):
        g = SparseGraph.from_edges(2, [0], [1])
        params = EncoderParams(np.array([[1.0, 2.0], [3.0, 4.0]]), np.eye(2))
        z = encode(params, renormalized_laplacian(g), np.eye(2)).z
        expected = np.array([2.0, 3.0]) / np.sqrt(13.0)
        assert np.allclose(z, [expected, expected], atol=1e-12)

    def test_matches_dense_oracle(self):
        for seed in range(5):
            ds = small_dataset(n=15, d=6, seed=seed)
            params = init_params((6, 10, 4), seed)
            z = encode(params, renormalized_laplacian(ds.graph), ds.features).z
            assert np.allclose(z, dense_forward(params.w1, params.w2, ds.graph.dense(), ds.features), atol=1e-12)

    def test_zero_w2_all_degenerate(self):
        ds = small_dataset()
        params = init_params((5, 8, 6), 0)
        params.w2[:] = 0.0
        emb = encode(params, renormalized_laplacian(ds.graph), ds.features)
        assert emb.degenerate_rows == ds.n
        assert not emb.z.any()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_embedding_invariants(self, seed):
        rng = np.random.default_rng(seed)
        ds = small_dataset(n=int(rng.integers(3, 25)), d=4, seed=seed)
        params = init_params((4, 7, 5), seed)
        emb = encode(params, renormalized_laplacian(ds.graph), ds.features)
        z = emb.z
        assert z.min() >= 0.0
        norms = np.linalg.norm(z, axis=1)
        assert np.all(np.abs(norms[~emb.degenerate] - 1) <= 1e-10)
        gram = z @ z.T
        assert gram.min() >= -1e-12
        live = np.flatnonzero(~emb.degenerate)
        zi = z[live]
        sq = ((zi[:, None] - zi[None]) ** 2).sum(axis=2)
        assert np.allclose(sq, 2 - 2 * gram[np.ix_(live, live)], atol=1e-10)

    def test_non_finite_aborts_with_layer(self):
        ds = small_dataset()
        params = init_params((5, 8, 6), 0)
        params.w1[0, 0] = np.nan
        with pytest.raises(FloatingPointError, match="layer 1"):
            encode(params, renormalized_laplacian(ds.graph), ds.features)
        params = init_params((5, 8, 6), 0)
        params.w2[:] = np.inf
        with pytest.raises(FloatingPointError, match="layer 2"):
            encode(params, renormalized_laplacian(ds.graph), ds.features)

    def test_dimension_mismatch(self):
        ds = small_dataset()
        with pytest.raises(ValueError):
            encode(init_params((4, 8, 6)), renormalized_laplacian(ds.graph), ds.features)


class TestReconstruction:
    def test_identical_rows_single_edge(self, backend):
        z = np.array([[1.0, 0.0], [1.0, 0.0]])
        loss = reconstruction_loss(z, SparseGraph.from_edges(2, [0], [1]))
        assert np.isclose(loss, -np.log(1 - 1e-10), rtol=1e-6)
        assert loss < 1e-9

    def test_orthogonal_rows_empty_graph(self, backend):
        loss = reconstruction_loss(np.eye(2), SparseGraph.from_edges(2, [], []))
        assert 0 < loss < 1e-9

    @pytest.mark.parametrize("weighting", ["balanced", "positive", "none"])
    def test_matches_dense_formula(self, backend, weighting):
        for seed in range(4):
            ds, params, lap, _ = random_problem(seed)
            z = encode(params, lap, ds.features).z
            got = reconstruction_loss(z, ds.graph, weighting)
            assert np.isclose(got, dense_recon(z, ds.graph.dense(), weighting), rtol=1e-12)

    def test_balanced_weights(self):
        g = SparseGraph.from_edges(4, [0, 1], [1, 2])
        assert class_weights(g) == (1.0, 8 / 8)
        g = SparseGraph.from_edges(5, [0], [1])
        assert class_weights(g) == (1.0, 7 / 18)

    def test_permutation_invariant(self):
        ds, params, lap, _ = random_problem(3)
        z = encode(params, lap, ds.features).z
        perm = np.random.default_rng(0).permutation(ds.n)
        a = ds.graph.dense()[np.ix_(perm, perm)]
        permuted = SparseGraph.from_dense(a)
        assert np.isclose(reconstruction_loss(z[perm], permuted), reconstruction_loss(z, ds.graph), rtol=1e-12)


class TestClusteringLoss:
    def test_full_rank_indicator_gives_zero(self):
        z = np.random.default_rng(0).random((10, 3))
        p = truncated_left_singular(z, 3).vectors
        assert abs(clustering_loss(z, p)) <= 1e-9

    def test_tail_energy(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            z = rng.random((30, 8))
            c = int(rng.integers(1, 8))
            p = truncated_left_singular(z, c).vectors
            s = np.linalg.svd(z, compute_uv=False)
            assert abs(clustering_loss(z, p) - np.sum(s[c:] ** 2)) <= 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_non_negative_and_rotation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.random((15, 5))
        p = np.linalg.qr(rng.standard_normal((15, 3)))[0]
        r = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        j = clustering_loss(z, p)
        assert j >= -1e-9
        assert abs(clustering_loss(z, p @ r) - j) <= 1e-9

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError, match="orthonormal"):
            clustering_loss(np.ones((4, 2)), np.ones((4, 2)))


class TestTotalLoss:
    def test_parts(self):
        ds, params, lap, p = random_problem(0)
        z = encode(params, lap, ds.features).z
        rep = total_loss(z, ds.graph, None, 0.0, 0.0, params)
        assert rep.total == rep.j_r
        rep = total_loss(z, ds.graph, p, 2.5, 1e-3, params)
        assert abs(rep.total - (rep.j_r + 2.5 * rep.j_c + 1e-3 * rep.l1)) <= 1e-12
        assert rep.l1 == np.abs(params.w1).sum() + np.abs(params.w2).sum()

    def test_zero_clustering_loss(self):
        z = np.eye(3)
        g = SparseGraph.from_edges(3, [], [])
        params = init_params((2, 2, 2))
        p = truncated_left_singular(z, 3).vectors
        rep = total_loss(z, g, p, 10.0, 1e-3, params)
        assert abs(rep.total - (rep.j_r + 1e-3 * rep.l1)) <= 1e-9

    def test_matches_loss_and_grad(self):
        ds, params, lap, p = random_problem(1)
        z = encode(params, lap, ds.features).z
        rep = total_loss(z, ds.graph, p, 0.7, 1e-3, params)
        rep2, _, _ = loss_and_grad(params, GraphContext(ds.graph, ds.features), p, 0.7, 1e-3)
        assert np.isclose(rep.total, rep2.total, rtol=1e-12)


def finite_difference(params, ds, lap, p, alpha, l1_coeff, step=1e-5):
    def f(q):
        z = encode(q, lap, ds.features).z
        return total_loss(z, ds.graph, p, alpha, l1_coeff, q).total

    out = []
    for name in ("w1", "w2"):
        w = getattr(params, name)
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            q = params.copy()
            getattr(q, name)[idx] += step
            up = f(q)
            getattr(q, name)[idx] -= 2 * step
            g[idx] = (up - f(q)) / (2 * step)
        out.append(g)
    return out


class TestGradients:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_differences(self, backend, seed):
        ds, params, lap, p = random_problem(seed)
        analytic = gradients(params, lap, ds.features, ds.graph, p, 0.8, 1e-3)
        numeric = finite_difference(params, ds, lap, p, 0.8, 1e-3)
        for a, fd in zip(analytic, numeric):
            mask = np.abs(a) > 1e-8
            assert mask.sum() > a.size // 4
            rel = np.abs(a - fd)[mask] / np.maximum(np.abs(a), np.abs(fd))[mask]
            assert rel.max() < 1e-4

    def test_alpha_zero_is_reconstruction_only(self):
        ds, params, lap, p = random_problem(4)
        with_p = gradients(params, lap, ds.features, ds.graph, p, 0.0, 0.0)
        without = gradients(params, lap, ds.features, ds.graph, None, 0.0, 0.0)
        for a, b in zip(with_p, without):
            assert np.array_equal(a, b)

    def test_l1_subgradient_sign_zero(self):
        ds, params, lap, _ = random_problem(5)
        params.w1[0, 0] = 0.0
        base = gradients(params, lap, ds.features, ds.graph, None, 0.0, 0.0)
        reg = gradients(params, lap, ds.features, ds.graph, None, 0.0, 0.5)
        diff = reg[0] - base[0]
        assert diff[0, 0] == 0.0
        assert np.allclose(diff.ravel()[1:], 0.5 * np.sign(params.w1.ravel()[1:]))

    def test_degenerate_rows_carry_no_gradient(self):
        # a node with zero features and no neighbours has h1 = 0, so its row of Z is zero
        g = SparseGraph.from_edges(4, [0, 1], [1, 2])
        x = np.array([[1.0, 0.2], [0.3, 1.0], [0.5, 0.5], [0.0, 0.0]])
        params = init_params((2, 5, 3), 1)
        params.w1 = np.abs(params.w1)
        params.w2 = np.abs(params.w2)
        ctx = GraphContext(g, x)
        _, grads, emb = loss_and_grad(params, ctx, None, 0.0, 0.0)
        assert emb.degenerate.tolist() == [False, False, False, True]
        assert all(np.all(np.isfinite(gr)) for gr in grads)
        # perturbing only the dead node's (zero) input changes nothing either way
        numeric = finite_difference(params, type("D", (), dict(features=x, graph=g))(),
                                    renormalized_laplacian(g), None, 0.0, 0.0)
        for a, fd in zip(grads, numeric):
            assert np.allclose(a, fd, atol=1e-7)
