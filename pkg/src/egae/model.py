"""Two-layer GCN encoder with adjacency and relaxed k-means decoders.

Forward pass::

    H1 = relu(L @ X @ W1)
    H2 = relu(L @ H1 @ W2)
    Z  = H2 / ||H2||_row

The inner-product decoder ``Z Z^T`` needs no sigmoid: rows of ``Z`` are
non-negative unit vectors, so every similarity already lies in ``[0, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import SparseGraph, renormalized_laplacian
from .linalg import row_normalize, spmm

LOG_EPS = 1e-10
NORM_EPS = 1e-12
WEIGHTINGS = ("balanced", "positive", "none")


@dataclass
class EncoderParams:
    w1: np.ndarray
    w2: np.ndarray
    seed: int = 0

    @property
    def dims(self):
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def copy(self):
        return EncoderParams(self.w1.copy(), self.w2.copy(), self.seed)

    def l1(self):
        return float(np.abs(self.w1).sum() + np.abs(self.w2).sum())


@dataclass
class Embedding:
    z: np.ndarray
    degenerate: np.ndarray

    @property
    def degenerate_rows(self):
        return int(self.degenerate.sum())


@dataclass
class LossReport:
    j_r: float
    j_c: float
    l1: float
    total: float
    alpha: float
    l1_coeff: float


def glorot_limit(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def init_params(dims, seed=0) -> EncoderParams:
    """Glorot-uniform weights for ``dims = (d, hidden, embed)``."""
    d, h, d_out = dims
    if min(d, h, d_out) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    lim1, lim2 = glorot_limit(d, h), glorot_limit(h, d_out)
    w1 = rng.uniform(-lim1, lim1, size=(d, h))
    w2 = rng.uniform(-lim2, lim2, size=(h, d_out))
    return EncoderParams(w1, w2, seed)


class GraphContext:
    """Per-dataset constants: graph, renormalised Laplacian and ``L @ X``.

    ``L @ X`` never changes during training, so it is computed once here.
    """

    def __init__(self, graph: SparseGraph, features, lap=None, weighting="balanced"):
        if weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        self.graph = graph
        self.lap = renormalized_laplacian(graph) if lap is None else lap
        self.lx = spmm(self.lap, features)
        self.weighting = weighting
        self.pos_w, self.neg_w = class_weights(graph, weighting)


def class_weights(graph: SparseGraph, weighting="balanced"):
    """Weights for (edge, non-edge) terms of the reconstruction loss.

    ``balanced`` down-weights non-edges so both classes carry equal total
    weight; ``positive`` up-weights edges instead; ``none`` weights both 1.
    Edge count includes the forced unit diagonal.
    """
    n = graph.n
    pos = graph.nnz + n
    neg = n * n - pos
    if weighting == "none":
        return 1.0, 1.0
    if weighting == "balanced":
        return 1.0, (pos / neg if neg > 0 else 0.0)
    if weighting == "positive":
        return (neg / pos if neg > 0 else 1.0), 1.0
    raise ValueError(f"unknown weighting {weighting!r}")


def _check_finite(arr, layer):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in encoder layer {layer}")


def _forward(params: EncoderParams, lap, lx):
    # overflow surfaces through _check_finite, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        a1 = lx @ params.w1
        _check_finite(a1, 1)
        h1 = np.maximum(a1, 0.0)
        a2 = spmm(lap, h1 @ params.w2)
        _check_finite(a2, 2)
    h2 = np.maximum(a2, 0.0)
    z, degenerate = row_normalize(h2, NORM_EPS)
    return dict(a1=a1, h1=h1, a2=a2, h2=h2, z=z, degenerate=degenerate)


def encode(params: EncoderParams, lap, x) -> Embedding:
    """Embed every node onto the non-negative part of the unit sphere."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != params.w1.shape[0] or lap.shape[0] != x.shape[0]:
        raise ValueError("dimension mismatch between Laplacian, features and parameters")
    cache = _forward(params, lap, spmm(lap, x))
    return Embedding(cache["z"], cache["degenerate"])


def _recon_loss_grad(z, graph: SparseGraph, pos_w, neg_w):
    n = z.shape[0]
    s = z @ z.T
    total, g = _kernels.bce_loss_grad(
        s, graph.indptr.astype(np.int64), graph.indices.astype(np.int64),
        graph.data.astype(np.float64), pos_w, neg_w, LOG_EPS)
    scale = 1.0 / (n * n)
    return total * scale, (g + g.T) @ z * scale


def reconstruction_loss(z, graph: SparseGraph, weighting="balanced") -> float:
    """Class-weighted cross-entropy between ``A + I`` and ``Z Z^T``, averaged over all n^2 entries.

    For binary targets this equals ``KL(A || Z Z^T)`` up to the clamp
    ``[1e-10, 1 - 1e-10]`` applied to the reconstruction.
    """
    z = z.z if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)
    pos_w, neg_w = class_weights(graph, weighting)
    return _recon_loss_grad(z, graph, pos_w, neg_w)[0]


def _check_indicator(p, tol=1e-6):
    p = np.asarray(p, dtype=np.float64)
    gram = p.T @ p
    if np.max(np.abs(gram - np.eye(p.shape[1])), initial=0.0) > tol:
        raise ValueError("indicator columns are not orthonormal")
    return p


def clustering_loss(z, p) -> float:
    """Relaxed k-means residual ``tr(Z Z^T) - tr(P^T Z Z^T P)``.

    Computed as ``||Z||_F^2 - ||Z^T P||_F^2`` without forming ``Z Z^T``.
    """
    z = z.z if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)
    p = _check_indicator(p)
    ztp = z.T @ p
    return float(np.sum(z * z) - np.sum(ztp * ztp))


def total_loss(z, graph, p, alpha, l1_coeff, params: EncoderParams, weighting="balanced") -> LossReport:
    j_r = reconstruction_loss(z, graph, weighting)
    j_c = 0.0 if p is None else clustering_loss(z, p)
    l1 = params.l1()
    return LossReport(j_r, j_c, l1, j_r + alpha * j_c + l1_coeff * l1, alpha, l1_coeff)


def loss_and_grad(params: EncoderParams, ctx: GraphContext, p, alpha, l1_coeff):
    """Loss report, ``(dW1, dW2)`` and the embedding for one full batch.

    ``p`` is held constant. Dead rows (all zero after the last ReLU) carry no
    gradient through the normalisation.
    """
    cache = _forward(params, ctx.lap, ctx.lx)
    z, degenerate = cache["z"], cache["degenerate"]
    j_r, dz = _recon_loss_grad(z, ctx.graph, ctx.pos_w, ctx.neg_w)
    j_c = 0.0
    if p is not None:
        p = _check_indicator(p)
        ptz = p.T @ z
        j_c = float(np.sum(z * z) - np.sum(ptz * ptz))
        if alpha != 0.0:
            dz = dz + alpha * 2.0 * (z - p @ ptz)

    norms = np.sqrt(np.einsum("ij,ij->i", cache["h2"], cache["h2"]))
    radial = np.einsum("ij,ij->i", z, dz)
    dh2 = (dz - z * radial[:, None]) / np.where(degenerate, 1.0, norms)[:, None]
    dh2[degenerate] = 0.0
    da2 = dh2 * (cache["a2"] > 0.0)
    db = spmm(ctx.lap, da2)  # Laplacian is symmetric
    dw2 = cache["h1"].T @ db
    da1 = (db @ params.w2.T) * (cache["a1"] > 0.0)
    dw1 = ctx.lx.T @ da1

    l1 = params.l1()
    if l1_coeff != 0.0:
        dw1 += l1_coeff * np.sign(params.w1)
        dw2 += l1_coeff * np.sign(params.w2)
    report = LossReport(j_r, j_c, l1, j_r + alpha * j_c + l1_coeff * l1, alpha, l1_coeff)
    return report, (dw1, dw2), Embedding(z, degenerate)


def gradients(params, lap, x, graph, p, alpha, l1_coeff, weighting="balanced"):
    """Analytic ``(dW1, dW2)`` of the total loss with ``p`` held fixed."""
    ctx = GraphContext(graph, x, lap=lap, weighting=weighting)
    _, grads, _ = loss_and_grad(params, ctx, p, alpha, l1_coeff)
    return grads
