"""Time the numba kernels against their pure-numpy twins.

Inputs are sized like the Cora workload: a 2708-node sparse graph, a
256-wide hidden layer, a 128x128 Gram matrix for the Jacobi solver and 7
cluster centres. Each kernel is called once untimed (JIT warm-up), then the
best of ``--repeat`` runs is reported along with the largest disagreement
between the two outputs, relative to the output's scale.

    python3 benchmarks/bench_kernels.py [--nodes 2708] [--repeat 5]
"""
import argparse
import time

import numpy as np

from egae import _kernels
from egae._jit import HAVE_NUMBA
from egae.graph import SparseGraph, renormalized_laplacian
from egae.linalg import JACOBI_MAX_SWEEPS, JACOBI_TOL


def best_of(fn, args, repeat):
    out = fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def rel_diff(a, b):
    if isinstance(a, tuple):
        return max(rel_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def cases(n, rng):
    src, dst = rng.integers(0, n, size=(2, 2 * n))
    keep = src != dst
    lap = renormalized_laplacian(SparseGraph.from_edges(n, src[keep], dst[keep]))
    csr = (lap.indptr.astype(np.int64), lap.indices.astype(np.int64), lap.data)
    h = rng.standard_normal((n, 256))
    z = rng.random((n, 128))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    centers = z[rng.choice(n, 7, replace=False)]
    labels = rng.integers(0, 7, n)
    gram = z.T @ z
    s = np.clip(z @ z.T, 0.0, 1.0)
    rounds = _kernels.round_robin(gram.shape[0])
    return {
        "spmm": (*csr, h),
        "kmeans_assign": (z, centers),
        "kmeans_update": (z, labels, 7),
        "jacobi_eigh": (gram, rounds, JACOBI_TOL, JACOBI_MAX_SWEEPS),
        "bce_loss_grad": (s, *csr, 1.0, 0.002, 1e-10),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2708)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy kernels can run")
        return 1
    inputs = cases(args.nodes, np.random.default_rng(args.seed))
    print(f"{'kernel':<15}{'numba (ms)':>12}{'numpy (ms)':>12}{'speed-up':>10}{'rel diff':>12}")
    for name, call_args in inputs.items():
        t_jit, out_jit = best_of(_kernels.IMPLEMENTATIONS["numba"][name], call_args, args.repeat)
        t_np, out_np = best_of(_kernels.IMPLEMENTATIONS["numpy"][name], call_args, args.repeat)
        if name == "jacobi_eigh":
            # eigenvector signs are arbitrary; compare eigenvalues and sweep counts
            out_jit, out_np = out_jit[0], out_np[0]
        print(f"{name:<15}{1e3 * t_jit:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_jit:>9.1f}x{rel_diff(out_jit, out_np):>12.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
