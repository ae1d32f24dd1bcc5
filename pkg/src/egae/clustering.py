"""Relaxed k-means and the graph-rectified indicator.

Relaxed k-means replaces the discrete scaled indicator of k-means by any
``P`` with orthonormal columns; ``max tr(P^T Z Z^T P)`` is then solved by
the leading left singular vectors of ``Z``. A hard partition is read off by
running ordinary k-means on the row-normalised ``P``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import (Assignment, jacobi_eigh, kmeans, nearest_centroid, orthonormal_completion,
                     row_normalize, sym_eig_smallest, truncated_left_singular)
from .model import Embedding

DENSE_LIMIT = 5000


@dataclass
class Indicator:
    p: np.ndarray
    rank_deficient: bool = False

    @property
    def c(self):
        return self.p.shape[1]

    def orthonormality_error(self):
        return float(np.max(np.abs(self.p.T @ self.p - np.eye(self.c)), initial=0.0))


@dataclass
class KMeansOptions:
    restarts: int = 20
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 0


def _z(z):
    return z.z if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)


def partition_rows(p, c, km: KMeansOptions | None = None) -> Assignment:
    """k-means on the row-normalised indicator.

    Rows that normalise to zero are left out of the fit and then given the
    label of the nearest final centroid.
    """
    km = km or KMeansOptions()
    rows, degenerate = row_normalize(p)
    live = ~degenerate
    if live.sum() < c:
        raise ValueError("fewer non-degenerate indicator rows than clusters")
    fit, centers = kmeans(rows[live], c, km.restarts, km.max_iter, km.tol, km.seed)
    labels = np.empty(p.shape[0], dtype=np.int64)
    labels[live] = fit.labels
    if degenerate.any():
        labels[degenerate] = nearest_centroid(rows[degenerate], centers)
    return Assignment(labels, fit.inertia, fit.n_iter, fit.degenerate, fit.history)


def relaxed_kmeans(z, c, km: KMeansOptions | None = None):
    """Returns ``(Indicator, Assignment)``."""
    z = _z(z)
    if not 1 <= c <= z.shape[0]:
        raise ValueError(f"need 1 <= c <= n, got c={c}")
    svd = truncated_left_singular(z, min(c, z.shape[1]))
    p = svd.vectors
    deficient = svd.rank_deficient
    if p.shape[1] < c:
        # more clusters than embedding dimensions: the rest of the indicator
        # lives in the null space of Z Z^T
        p = orthonormal_completion(p, c)
        deficient = True
    return Indicator(p, deficient), partition_rows(p, c, km)


def rectified_indicator(z, lap_unnorm, beta, c) -> Indicator:
    """Indicator minimising ``tr(P^T (beta L - Z Z^T) P)``.

    ``beta = 0`` reduces to relaxed k-means and is solved through the small
    Gram matrix. Otherwise the ``n x n`` matrix is formed densely, which is
    only allowed up to ``DENSE_LIMIT`` nodes.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    z = _z(z)
    n = z.shape[0]
    if beta == 0:
        if c <= z.shape[1]:
            svd = truncated_left_singular(z, c)
            return Indicator(svd.vectors, svd.rank_deficient)
    if n > DENSE_LIMIT:
        raise ValueError(f"rectified indicator with beta > 0 is limited to n <= {DENSE_LIMIT}")
    lap = lap_unnorm.toarray() if sp.issparse(lap_unnorm) else np.asarray(lap_unnorm, dtype=np.float64)
    m = beta * lap - z @ z.T
    m = 0.5 * (m + m.T)
    return Indicator(sym_eig_smallest(m, c))


def projector_distance(p1, p2):
    """Frobenius distance between the orthogonal projectors onto two column spaces."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    # ||P1P1' - P2P2'||_F^2 = k1 + k2 - 2 ||P1' P2||_F^2
    cross = p1.T @ p2
    sq = p1.shape[1] + p2.shape[1] - 2.0 * np.sum(cross * cross)
    return float(np.sqrt(max(sq, 0.0)))


# --------------------------------------------------------------------------
# eigen-gap instances


@dataclass
class EigGapInstance:
    """Block-diagonal Gram matrix of unit vectors, orthogonal across blocks.

    Every within-block inner product is at least ``1 / epsilon``.
    """

    sizes: list
    epsilon: float
    q: np.ndarray
    labels: np.ndarray = field(default=None)

    def blocks(self):
        start = 0
        for s in self.sizes:
            yield self.q[start:start + s, start:start + s]
            start += s

    def validate(self, tol=1e-10):
        if self.epsilon < 1:
            raise ValueError("epsilon must be at least 1")
        if not np.allclose(self.q, self.q.T, atol=tol):
            raise ValueError("Q is not symmetric")
        if not np.allclose(np.diag(self.q), 1.0, atol=tol):
            raise ValueError("Q must have unit diagonal")
        mask = self.labels[:, None] == self.labels[None, :]
        if np.max(np.abs(self.q[~mask]), initial=0.0) > tol:
            raise ValueError("Q has non-zero entries across blocks")
        if np.min(self.q[mask]) < 1.0 / self.epsilon - tol:
            raise ValueError("within-block similarity below 1/epsilon")


def epsilon_bound(sizes):
    """Upper end of the admissible range ``|C_min| / (|C_max| - 2) + 1``."""
    cmin, cmax = min(sizes), max(sizes)
    if cmax <= 2:
        return np.inf
    return cmin / (cmax - 2) + 1.0


def block_vectors(sizes, epsilon, rng, spread="random"):
    """Unit rows, non-negative, orthogonal across blocks, within-block inner products >= 1/epsilon.

    Row ``i`` of block ``b`` is ``sqrt(1/eps) u_b + sqrt(1 - 1/eps) v_i`` with
    ``u_b`` a block-private axis and ``v_i`` a non-negative unit vector on
    further private axes. ``spread`` picks ``v_i``: ``"random"`` (uniform
    non-negative), ``"orthogonal"`` (one axis per row, the most spread out)
    or ``"two-level"`` (two sub-groups sharing one axis each, which pushes
    the second eigenvalue up).
    """
    t = 1.0 / epsilon
    rows, labels = [], []
    dim = sum(1 + s for s in sizes)
    offset = 0
    for b, s in enumerate(sizes):
        v = np.zeros((s, s))
        if spread == "orthogonal":
            v = np.eye(s)
        elif spread == "two-level":
            half = max(1, s // 2)
            v[:half, 0] = 1.0
            v[half:, 1 if s > 1 else 0] = 1.0
        else:
            v = rng.random((s, s)) ** 3
            v /= np.linalg.norm(v, axis=1, keepdims=True)
        block = np.zeros((s, dim))
        block[:, offset] = np.sqrt(t)
        block[:, offset + 1:offset + 1 + s] = np.sqrt(1.0 - t) * v
        rows.append(block)
        labels.append(np.full(s, b))
        offset += 1 + s
    return np.vstack(rows), np.concatenate(labels)


def make_eiggap_instance(sizes, epsilon, rng, spread="random") -> EigGapInstance:
    z, labels = block_vectors(sizes, epsilon, rng, spread)
    q = z @ z.T
    q = 0.5 * (q + q.T)
    np.fill_diagonal(q, 1.0)
    return EigGapInstance(list(sizes), float(epsilon), q, labels)


def check_eigengap(inst: EigGapInstance) -> bool:
    """Whether every block's top eigenvalue beats every block's second one."""
    lam1, lam2 = [], []
    for block in inst.blocks():
        w = np.linalg.eigvalsh(block)
        lam1.append(w[-1])
        lam2.append(w[-2] if w.shape[0] > 1 else 0.0)
    return bool(min(lam1) > max(lam2))


# --------------------------------------------------------------------------
# normalised-cut comparison and the sign of the leading eigenvector


@dataclass
class NcutReport:
    residual: float
    perpendicular: bool
    projector_distance: float
    mean_zero: bool = False


def normalized_cut_equivalence_test(z, c, tol=1e-8) -> NcutReport:
    """Compare relaxed k-means with normalised-cut spectral clustering on ``Z Z^T``.

    With ``mu`` the mean row and ``Zc`` the centred rows, the two top-``c``
    subspaces coincide when ``Zc @ mu = 0``. The residual ``||Zc mu||`` is
    always reported; the projector distance is filled in whenever the
    normalised similarity is defined (``NaN`` otherwise).

    When ``mu = 0`` the degree matrix ``n diag(Z mu)`` vanishes. It is then
    taken as the identity, the scale-free limit of ``n ||mu||^2 I``.
    """
    z = _z(z)
    n = z.shape[0]
    mu = z.mean(axis=0)
    centred = z - mu
    residual = float(np.linalg.norm(centred @ mu))
    mean_zero = float(np.linalg.norm(mu)) <= tol
    perpendicular = residual <= tol * max(1.0, float(np.linalg.norm(z)) ** 2)
    gram = z @ z.T
    if mean_zero:
        deg = np.ones(n)
    else:
        deg = gram.sum(axis=1)
    if np.any(deg <= 0):
        return NcutReport(residual, perpendicular, float("nan"), mean_zero)
    scale = 1.0 / np.sqrt(deg)
    normalized = gram * scale[:, None] * scale[None, :]
    normalized = 0.5 * (normalized + normalized.T)
    _, vecs = np.linalg.eigh(normalized)
    ncut = vecs[:, -c:]
    rkm = truncated_left_singular(z, c).vectors
    return NcutReport(residual, perpendicular, projector_distance(rkm, ncut), mean_zero)


def leading_eigenvector(k):
    """Eigenvector of the largest eigenvalue, via the Jacobi solver."""
    _, v = jacobi_eigh(k)
    return v[:, -1]
