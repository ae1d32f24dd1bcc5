"""Hot inner loops, each in two flavours.

``*_loops`` functions are explicit loops compiled by numba; ``*_numpy``
functions are vectorised twins with the same contract. The module-level
names without suffix dispatch to one or the other according to
``egae._jit.USE_NUMBA``. ``IMPLEMENTATIONS`` exposes both sets so tests and
benchmarks can compare them side by side in one process.
"""
import numpy as np

from ._jit import USE_NUMBA, njit


# --------------------------------------------------------------------------
# CSR sparse x dense


@njit
def spmm_loops(indptr, indices, data, m):
    n = indptr.shape[0] - 1
    k = m.shape[1]
    out = np.zeros((n, k))
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            v = data[p]
            for col in range(k):
                out[i, col] += v * m[j, col]
    return out


def spmm_numpy(indptr, indices, data, m):
    n = indptr.shape[0] - 1
    out = np.zeros((n, m.shape[1]))
    if indices.shape[0] == 0:
        return out
    prod = data[:, None] * m[indices]
    starts = indptr[:-1]
    nonempty = starts < indptr[1:]
    out[nonempty] = np.add.reduceat(prod, starts[nonempty], axis=0)
    return out


# --------------------------------------------------------------------------
# k-means steps


@njit
def kmeans_assign_loops(x, centers):
    n, k = x.shape
    c = centers.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(c):
            d = 0.0
            for t in range(k):
                diff = x[i, t] - centers[j, t]
                d += diff * diff
            if d < best:
                best = d
                arg = j
        labels[i] = arg
        dist[i] = best
    return labels, dist


def kmeans_assign_numpy(x, centers):
    # expanded form picks the label; the reported distance is recomputed
    # directly so inertia carries no cancellation error
    cross = x @ centers.T
    d2 = (centers * centers).sum(axis=1)[None, :] - 2.0 * cross
    labels = np.argmin(d2, axis=1).astype(np.int64)
    diff = x - centers[labels]
    dist = np.einsum("ij,ij->i", diff, diff)
    return labels, dist


@njit
def kmeans_update_loops(x, labels, c):
    n, k = x.shape
    sums = np.zeros((c, k))
    counts = np.zeros(c, dtype=np.int64)
    for i in range(n):
        j = labels[i]
        counts[j] += 1
        for t in range(k):
            sums[j, t] += x[i, t]
    return sums, counts


def kmeans_update_numpy(x, labels, c):
    counts = np.bincount(labels, minlength=c).astype(np.int64)
    sums = np.zeros((c, x.shape[1]))
    np.add.at(sums, labels, x)
    return sums, counts


# --------------------------------------------------------------------------
# Jacobi eigensolver, round-robin ordering: every round rotates n/2 disjoint
# index pairs at once, which is exact because disjoint rotations commute.


def _round_robin(n):
    m = n + (n % 2)
    players = np.arange(m)
    rounds = np.empty((m - 1, m // 2, 2), dtype=np.int64)
    for r in range(m - 1):
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            rounds[r, i, 0] = min(a, b)
            rounds[r, i, 1] = max(a, b)
        players = np.concatenate((players[:1], players[-1:], players[1:-1]))
    return rounds


def _rotation(app, aqq, apq):
    # c, s annihilating apq in the 2x2 symmetric block
    if apq == 0.0:
        return 1.0, 0.0
    tau = (aqq - app) / (2.0 * apq)
    if tau >= 0.0:
        t = 1.0 / (tau + np.hypot(1.0, tau))
    else:
        t = -1.0 / (-tau + np.hypot(1.0, tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, t * c


_rotation_jit = njit(_rotation)


@njit
def _off_norm(a):
    n = a.shape[0]
    off = 0.0
    tot = 0.0
    for i in range(n):
        for j in range(n):
            v = a[i, j] * a[i, j]
            tot += v
            if i != j:
                off += v
    return np.sqrt(off), np.sqrt(tot)


@njit
def jacobi_eigh_loops(a, rounds, tol, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    half = rounds.shape[1]
    cs = np.empty(half)
    sn = np.empty(half)
    sweeps = 0
    for sweep in range(max_sweeps):
        off, tot = _off_norm(a)
        if off <= tol * tot or tot == 0.0:
            break
        sweeps += 1
        for r in range(rounds.shape[0]):
            for i in range(half):
                p = rounds[r, i, 0]
                q = rounds[r, i, 1]
                if q >= n:
                    cs[i] = 1.0
                    sn[i] = 0.0
                else:
                    c, s = _rotation_jit(a[p, p], a[q, q], a[p, q])
                    cs[i] = c
                    sn[i] = s
            for i in range(half):
                p = rounds[r, i, 0]
                q = rounds[r, i, 1]
                if q >= n or sn[i] == 0.0:
                    continue
                c = cs[i]
                s = sn[i]
                for k in range(n):
                    ap = a[p, k]
                    aq = a[q, k]
                    a[p, k] = c * ap - s * aq
                    a[q, k] = s * ap + c * aq
            for i in range(half):
                p = rounds[r, i, 0]
                q = rounds[r, i, 1]
                if q >= n or sn[i] == 0.0:
                    continue
                c = cs[i]
                s = sn[i]
                for k in range(n):
                    ap = a[k, p]
                    aq = a[k, q]
                    a[k, p] = ap * c - aq * s
                    a[k, q] = ap * s + aq * c
                    vp = v[k, p]
                    vq = v[k, q]
                    v[k, p] = vp * c - vq * s
                    v[k, q] = vp * s + vq * c
                a[p, q] = 0.0
                a[q, p] = 0.0
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v, sweeps


def jacobi_eigh_numpy(a, rounds, tol, max_sweeps):
    n = a.shape[0]
    a = np.array(a, dtype=np.float64, copy=True)
    v = np.eye(n)
    sweeps = 0
    # drop the dummy partner of an odd-sized problem once, up front
    pairs = [rd[rd[:, 1] < n] for rd in rounds]
    for _ in range(max_sweeps):
        tot = np.sqrt(np.sum(a * a))
        off_diag = a - np.diag(np.diag(a))
        off = np.sqrt(np.sum(off_diag * off_diag))
        if off <= tol * tot or tot == 0.0:
            break
        sweeps += 1
        for rd in pairs:
            p, q = rd[:, 0], rd[:, 1]
            app, aqq, apq = a[p, p], a[q, q], a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            p, q, app, aqq, apq = p[active], q[active], app[active], aqq[active], apq[active]
            tau = (aqq - app) / (2.0 * apq)
            root = np.hypot(1.0, tau)
            t = np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + root)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cc, ss = c[:, None], s[:, None]
            ap, aq = a[p, :], a[q, :]
            a[p, :], a[q, :] = cc * ap - ss * aq, ss * ap + cc * aq
            ap, aq = a[:, p], a[:, q]
            a[:, p], a[:, q] = ap * c - aq * s, ap * s + aq * c
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = vp * c - vq * s, vp * s + vq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
    return np.diag(a).copy(), v, sweeps


# --------------------------------------------------------------------------
# Class-weighted binary cross-entropy of a dense similarity matrix against a
# sparse target whose diagonal is forced to 1. Returns the summed loss and
# the elementwise derivative d(loss)/d(S); entries outside the clamp band
# get zero derivative.


@njit
def bce_loss_grad_loops(s, indptr, indices, data, pos_w, neg_w, eps):
    n = s.shape[0]
    grad = np.empty((n, n))
    target = np.zeros(n)
    hi = 1.0 - eps
    total = 0.0
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            target[indices[p]] = data[p]
        target[i] = 1.0
        for j in range(n):
            t = target[j]
            x = s[i, j]
            inside = x > eps and x < hi
            if x < eps:
                x = eps
            elif x > hi:
                x = hi
            total -= pos_w * t * np.log(x) + neg_w * (1.0 - t) * np.log(1.0 - x)
            if inside:
                grad[i, j] = -pos_w * t / x + neg_w * (1.0 - t) / (1.0 - x)
            else:
                grad[i, j] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            target[indices[p]] = 0.0
        target[i] = 0.0
    return total, grad


def bce_loss_grad_numpy(s, indptr, indices, data, pos_w, neg_w, eps):
    n = s.shape[0]
    target = np.zeros((n, n))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    target[rows, indices] = data
    np.fill_diagonal(target, 1.0)
    x = np.clip(s, eps, 1.0 - eps)
    total = -np.sum(pos_w * target * np.log(x) + neg_w * (1.0 - target) * np.log(1.0 - x))
    inside = (s > eps) & (s < 1.0 - eps)
    grad = np.where(inside, -pos_w * target / x + neg_w * (1.0 - target) / (1.0 - x), 0.0)
    return float(total), grad


IMPLEMENTATIONS = {
    "numba": dict(
        spmm=spmm_loops,
        kmeans_assign=kmeans_assign_loops,
        kmeans_update=kmeans_update_loops,
        jacobi_eigh=jacobi_eigh_loops,
        bce_loss_grad=bce_loss_grad_loops,
    ),
    "numpy": dict(
        spmm=spmm_numpy,
        kmeans_assign=kmeans_assign_numpy,
        kmeans_update=kmeans_update_numpy,
        jacobi_eigh=jacobi_eigh_numpy,
        bce_loss_grad=bce_loss_grad_numpy,
    ),
}

ACTIVE = "numba" if USE_NUMBA else "numpy"
_active = IMPLEMENTATIONS[ACTIVE]

spmm = _active["spmm"]
kmeans_assign = _active["kmeans_assign"]
kmeans_update = _active["kmeans_update"]
jacobi_eigh = _active["jacobi_eigh"]
bce_loss_grad = _active["bce_loss_grad"]
round_robin = _round_robin


def use(name):
    """Point the dispatch names at implementation set ``name``; returns the previous one."""
    global ACTIVE, spmm, kmeans_assign, kmeans_update, jacobi_eigh, bce_loss_grad
    if name not in IMPLEMENTATIONS:
        raise ValueError(f"unknown kernel set {name!r}")
    previous, ACTIVE = ACTIVE, name
    impl = IMPLEMENTATIONS[name]
    spmm, kmeans_assign, kmeans_update = impl["spmm"], impl["kmeans_assign"], impl["kmeans_update"]
    jacobi_eigh, bce_loss_grad = impl["jacobi_eigh"], impl["bce_loss_grad"]
    return previous
