"""Numerical kernels: sparse products, eigen/singular solvers, k-means."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import _kernels

log = logging.getLogger(__name__)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
RANK_TOL = 1e-12

_ROUNDS_CACHE: dict = {}


def _rounds(n):
    if n not in _ROUNDS_CACHE:
        _ROUNDS_CACHE[n] = _kernels.round_robin(n)
    return _ROUNDS_CACHE[n]


def _as_csr(s):
    if sp.issparse(s):
        s = s.tocsr()
        return (s.shape, s.indptr.astype(np.int64), s.indices.astype(np.int64),
                s.data.astype(np.float64))
    # SparseGraph-like
    return ((s.n, s.n), s.indptr.astype(np.int64), s.indices.astype(np.int64),
            s.data.astype(np.float64))


def spmm(s, m):
    """Exact sparse (CSR) times dense product."""
    shape, indptr, indices, data = _as_csr(s)
    m = np.ascontiguousarray(m, dtype=np.float64)
    if m.ndim != 2 or shape[1] != m.shape[0]:
        raise ValueError(f"dimension mismatch: {shape} @ {m.shape}")
    return _kernels.spmm(indptr, indices, data, m)


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.

    Returns eigenvalues in ascending order and the matching orthonormal
    eigenvectors as columns. Iterates until the off-diagonal Frobenius norm
    falls below ``tol`` times the total norm.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    n = a.shape[0]
    if n == 1:
        return a[0].copy(), np.ones((1, 1))
    w, v, sweeps = _kernels.jacobi_eigh(a, _rounds(n), tol, max_sweeps)
    if sweeps >= max_sweeps:
        log.warning("Jacobi eigensolver hit %d sweeps without converging", max_sweeps)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def _fix_signs(p):
    # largest-magnitude entry of every column made positive
    if p.size == 0:
        return p
    idx = np.argmax(np.abs(p), axis=0)
    signs = np.sign(p[idx, np.arange(p.shape[1])])
    signs[signs == 0] = 1.0
    return p * signs


def orthonormal_completion(q, total):
    """Extend the orthonormal columns of ``q`` to ``total`` columns."""
    n = q.shape[0]
    cols = [q[:, j] for j in range(q.shape[1])]
    basis = np.column_stack(cols) if cols else np.zeros((n, 0))
    for j in range(n):
        if len(cols) == total:
            break
        e = np.zeros(n)
        e[j] = 1.0
        for _ in range(2):  # twice is enough
            e -= basis @ (basis.T @ e)
        norm = np.linalg.norm(e)
        if norm > 0.5:
            cols.append(e / norm)
            basis = np.column_stack(cols)
    return np.column_stack(cols)


class LeftSingular(NamedTuple):
    vectors: np.ndarray
    singular_values: np.ndarray
    rank_deficient: bool


def truncated_left_singular(m, c, tol=RANK_TOL) -> LeftSingular:
    """Leading ``c`` left singular vectors of a tall matrix.

    Works on the small ``k x k`` Gram matrix ``m.T @ m``: its eigenvectors
    ``V`` and eigenvalues ``s**2`` give ``P = m V / s``. Columns whose
    singular value does not exceed ``max(tol, sqrt(k eps) s_max)`` (the
    resolution of the Gram route) are replaced by an orthonormal completion
    and ``rank_deficient`` is set.
    """
    m = np.ascontiguousarray(m, dtype=np.float64)
    n, k = m.shape
    if not 1 <= c <= min(n, k):
        raise ValueError(f"need 1 <= c <= min(n, k) = {min(n, k)}, got c={c}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    w, v = jacobi_eigh(m.T @ m)
    w, v = w[::-1], v[:, ::-1]
    sigma = np.sqrt(np.clip(w, 0.0, None))
    # squaring loses half the digits: singular values below sqrt(k eps) sigma_max
    # are indistinguishable from zero through the Gram matrix
    floor = max(tol, np.sqrt(k * np.finfo(np.float64).eps) * sigma[0])
    good = int(np.sum(sigma[:c] > floor))
    p = (m @ v[:, :good]) / sigma[:good]
    if good:
        q, r = np.linalg.qr(p)
        # undo QR's sign freedom so q stays close to p column-wise
        q *= np.where(np.diag(r) < 0, -1.0, 1.0)
    else:
        q = np.zeros((n, 0))
    deficient = good < c
    if deficient:
        log.warning("rank deficiency: only %d of %d singular values exceed %g", good, c, floor)
        q = orthonormal_completion(q, c)
    return LeftSingular(_fix_signs(q), sigma[:c].copy(), deficient)


def _check_symmetric(m, tol=1e-10):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(m - m.T), initial=0.0) > tol * max(1.0, np.max(np.abs(m), initial=0.0)):
        raise ValueError("matrix is not symmetric")
    return m


def sym_eig_smallest(m, c):
    """Orthonormal basis of the eigenspace of the ``c`` smallest eigenvalues.

    Dense LAPACK solve; intended for matrices up to a few thousand rows.
    """
    m = _check_symmetric(m.toarray() if sp.issparse(m) else m)
    if not 1 <= c <= m.shape[0]:
        raise ValueError("c out of range")
    _, v = np.linalg.eigh(m)
    return _fix_signs(v[:, :c].copy())


def row_normalize(m, eps=1e-12):
    """Scale every row to unit length.

    Rows shorter than ``eps`` come back as zeros. Returns ``(rows, degenerate)``
    where ``degenerate`` is the boolean mask of those rows.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = np.asarray(m, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    degenerate = norms < eps
    safe = np.where(degenerate, 1.0, norms)
    out = m / safe[:, None]
    out[degenerate] = 0.0
    return out, degenerate


# --------------------------------------------------------------------------
# k-means


@dataclass
class Assignment:
    labels: np.ndarray
    inertia: float
    n_iter: int = 0
    degenerate: bool = False
    history: list = field(default_factory=list)

    @property
    def c(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0


def kmeans_plusplus(x, c, rng):
    n = x.shape[0]
    centers = np.empty((c, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.einsum("ij,ij->i", x - centers[0], x - centers[0])
    for j in range(1, c):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[j] = x[idx]
        diff = x - centers[j]
        np.minimum(d2, np.einsum("ij,ij->i", diff, diff), out=d2)
    return centers


def _reseed_empty(x, centers, labels, dist):
    """Move centres that own no point onto the points farthest from theirs."""
    counts = np.bincount(labels, minlength=centers.shape[0])
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return False
    dist = dist.copy()
    for j in empty:
        far = int(np.argmax(dist))
        if dist[far] <= 0.0:
            break  # fewer distinct points than clusters
        centers[j] = x[far]
        dist[far] = 0.0
    return True


def _lloyd(x, centers, max_iter, tol, check_monotone):
    c = centers.shape[0]
    labels, dist = _kernels.kmeans_assign(x, centers)
    if _reseed_empty(x, centers, labels, dist):
        labels, dist = _kernels.kmeans_assign(x, centers)
    inertia = float(dist.sum())
    history = [inertia]
    it = 0
    for it in range(1, max_iter + 1):
        sums, counts = _kernels.kmeans_update(x, labels, c)
        full = counts > 0
        centers[full] = sums[full] / counts[full, None]
        new_labels, dist = _kernels.kmeans_assign(x, centers)
        if _reseed_empty(x, centers, new_labels, dist):
            new_labels, dist = _kernels.kmeans_assign(x, centers)
        new_inertia = float(dist.sum())
        if check_monotone and new_inertia > inertia * (1.0 + 1e-12) + 1e-300:
            raise AssertionError(f"k-means inertia rose at iteration {it}: {inertia!r} -> {new_inertia!r}")
        history.append(new_inertia)
        unchanged = np.array_equal(new_labels, labels)
        labels = new_labels
        drop = inertia - new_inertia
        inertia = new_inertia
        if unchanged or drop <= tol * max(inertia, 1e-300):
            break
    degenerate = bool(np.any(np.bincount(labels, minlength=c) == 0))
    return Assignment(labels, inertia, it, degenerate, history), centers


def kmeans(x, c, restarts=20, max_iter=300, tol=1e-6, seed=0, check_monotone=False):
    """Lloyd's algorithm from k-means++ seeds, best of ``restarts`` runs.

    Returns ``(Assignment, centroids)``. Each restart draws from its own
    child of ``SeedSequence(seed)``; the lowest inertia wins, ties going to
    the earliest restart. ``tol`` bounds the relative inertia drop that
    still counts as progress.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= c <= n:
        raise ValueError(f"need 1 <= c <= n = {n}, got {c}")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    best = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        assignment, centers = _lloyd(x, kmeans_plusplus(x, c, rng), max_iter, tol, check_monotone)
        if best is None or assignment.inertia < best[0].inertia:
            best = (assignment, centers)
    return best


def nearest_centroid(x, centers):
    labels, _ = _kernels.kmeans_assign(np.ascontiguousarray(x, dtype=np.float64), centers)
    return labels
