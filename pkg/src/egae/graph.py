"""Graphs, Laplacians, dataset loaders and the two-rings generator."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class SparseGraph:
    """Symmetric adjacency matrix in CSR form, without self-loops.

    Build instances with :meth:`from_edges`; it symmetrises, drops
    self-loops and collapses duplicates so the invariants hold by
    construction.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    is_symmetric: bool = True

    @classmethod
    def from_edges(cls, n, src, dst, weights=None, symmetrize=True):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have the same length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError("edge endpoint out of range [0, n)")
        w = np.ones(src.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("edge weights must be finite and non-negative")
        if symmetrize:
            src, dst, w = np.concatenate((src, dst)), np.concatenate((dst, src)), np.concatenate((w, w))
        keep = (src != dst) & (w > 0)
        src, dst, w = src[keep], dst[keep], w[keep]
        key = src * n + dst
        order = np.lexsort((-w, key))  # duplicates: largest weight first
        key, w = key[order], w[order]
        first = np.ones(key.shape[0], dtype=bool)
        first[1:] = key[1:] != key[:-1]
        key, w = key[first], w[first]
        rows, cols = key // n, key % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        g = cls(n, indptr, cols.astype(np.int64), w, is_symmetric=symmetrize)
        if not symmetrize:
            object.__setattr__(g, "is_symmetric", g._check_symmetric())
        return g

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_edges(a.shape[0], rows, cols, a[rows, cols], symmetrize=False)

    def _check_symmetric(self):
        m = self.to_scipy()
        return (abs(m - m.T) > 0).nnz == 0

    @property
    def nnz(self):
        return int(self.indices.shape[0])

    @property
    def num_edges(self):
        """Undirected edge count."""
        return self.nnz // 2

    def degrees(self):
        return np.asarray(self.to_scipy().sum(axis=1)).ravel()

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def dense(self):
        return self.to_scipy().toarray()

    def edge_set(self):
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return {(int(i), int(j)) for i, j in zip(rows, self.indices) if i < j}

    def validate(self):
        """Assert every structural invariant; raises ``ValueError`` on violation."""
        if self.indptr.shape != (self.n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != self.nnz:
            raise ValueError("bad indptr")
        if np.any(self.data <= 0):
            raise ValueError("stored explicit zero or negative weight")
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        if np.any(rows == self.indices):
            raise ValueError("self-loop stored")
        key = rows * self.n + self.indices
        if np.unique(key).shape[0] != key.shape[0]:
            raise ValueError("duplicate entries")
        if not self._check_symmetric():
            raise ValueError("adjacency is not symmetric")


@dataclass(frozen=True)
class Dataset:
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    c: int
    node_ids: list = field(default_factory=list)
    label_names: list = field(default_factory=list)

    @property
    def n(self):
        return self.graph.n

    def __post_init__(self):
        if self.features.shape[0] != self.graph.n or self.labels.shape[0] != self.graph.n:
            raise DatasetError("graph, features and labels disagree on the node count")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features contain non-finite values")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.c):
            raise DatasetError("labels outside [0, c)")


def renormalized_laplacian(g: SparseGraph) -> sp.csr_matrix:
    """``D^-1/2 (I + A) D^-1/2`` with ``D`` the degree matrix of ``I + A``.

    Isolated nodes are fine: their self-loop gives them degree one.
    """
    if not g.is_symmetric:
        raise ValueError("renormalized Laplacian requires a symmetric adjacency")
    m = (g.to_scipy() + sp.identity(g.n, format="csr")).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    d = np.asarray(m.sum(axis=1)).ravel()
    scale = 1.0 / np.sqrt(d)
    rows = np.repeat(np.arange(g.n), np.diff(m.indptr))
    data = m.data * scale[rows] * scale[m.indices]
    return sp.csr_matrix((data, m.indices.copy(), m.indptr.copy()), shape=(g.n, g.n))


def unnormalized_laplacian(g: SparseGraph) -> sp.csr_matrix:
    """``D - A``."""
    if not g.is_symmetric:
        raise ValueError("Laplacian requires a symmetric adjacency")
    a = g.to_scipy()
    deg = np.asarray(a.sum(axis=1)).ravel()
    lap = (sp.diags(deg) - a).tocsr()
    lap.sort_indices()
    return lap


# --------------------------------------------------------------------------
# loaders


def _encode_labels(raw):
    uniq = sorted(set(raw))
    try:
        uniq = sorted(uniq, key=int)
    except ValueError:
        pass
    index = {lab: i for i, lab in enumerate(uniq)}
    return np.array([index[r] for r in raw], dtype=np.int64), uniq


def _edges_to_graph(n, pairs, id_index, drop_dangling, weights=None):
    src, dst, kept_w = [], [], []
    for k, (a, b, lineno) in enumerate(pairs):
        ia, ib = id_index.get(a), id_index.get(b)
        if ia is None or ib is None:
            if drop_dangling:
                continue
            bad = a if ia is None else b
            raise DatasetError(f"edge on line {lineno} references unknown node id {bad!r}")
        src.append(ia)
        dst.append(ib)
        if weights is not None:
            kept_w.append(weights[k])
    return SparseGraph.from_edges(n, src, dst, kept_w if weights is not None else None)


def _load_content_cites(node_file, edge_file, drop_dangling):
    rows = {}
    width = None
    with open(node_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise DatasetError(f"{node_file}:{lineno}: expected id, features and label")
            if width is None:
                width = len(parts) - 2
            elif len(parts) - 2 != width:
                raise DatasetError(f"{node_file}:{lineno}: expected {width} features, got {len(parts) - 2}")
            try:
                feats = [float(v) for v in parts[1:-1]]
            except ValueError as exc:
                raise DatasetError(f"{node_file}:{lineno}: {exc}") from None
            rows[parts[0]] = (feats, parts[-1])  # last occurrence wins, first position kept
    if not rows:
        raise DatasetError(f"{node_file}: no nodes")
    ids = list(rows)
    features = np.array([rows[i][0] for i in ids], dtype=np.float64)
    labels, names = _encode_labels([rows[i][1] for i in ids])
    pairs = []
    with open(edge_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{edge_file}:{lineno}: expected two node ids")
            pairs.append((parts[0], parts[1], lineno))
    index = {nid: k for k, nid in enumerate(ids)}
    graph = _edges_to_graph(len(ids), pairs, index, drop_dangling)
    return Dataset(graph, features, labels, len(names), ids, names)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: missing header row")
        body = [(lineno, row) for lineno, row in enumerate(reader, 2) if row]
    return header, body


def _load_csv_triple(node_file, edge_file, label_file, drop_dangling, keep_weights):
    header, body = _read_csv(node_file)
    width = len(header) - 1
    rows = {}
    for lineno, row in body:
        if len(row) != width + 1:
            raise DatasetError(f"{node_file}:{lineno}: expected {width + 1} columns, got {len(row)}")
        try:
            rows[row[0]] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise DatasetError(f"{node_file}:{lineno}: {exc}") from None
    if not rows:
        raise DatasetError(f"{node_file}: no nodes")
    ids = list(rows)
    index = {nid: k for k, nid in enumerate(ids)}
    features = np.array([rows[i] for i in ids], dtype=np.float64).reshape(len(ids), width)

    _, lab_body = _read_csv(label_file)
    raw = {}
    for lineno, row in lab_body:
        if len(row) != 2:
            raise DatasetError(f"{label_file}:{lineno}: expected id,label")
        if row[0] not in index:
            raise DatasetError(f"{label_file}:{lineno}: unknown node id {row[0]!r}")
        raw[row[0]] = row[1]
    missing = [i for i in ids if i not in raw]
    if missing:
        raise DatasetError(f"{label_file}: no label for node id {missing[0]!r}")
    labels, names = _encode_labels([raw[i] for i in ids])

    _, edge_body = _read_csv(edge_file)
    pairs, weights = [], []
    for lineno, row in edge_body:
        if len(row) not in (2, 3):
            raise DatasetError(f"{edge_file}:{lineno}: expected src,dst[,weight]")
        pairs.append((row[0], row[1], lineno))
        try:
            weights.append(float(row[2]) if len(row) == 3 else 1.0)
        except ValueError as exc:
            raise DatasetError(f"{edge_file}:{lineno}: {exc}") from None
    graph = _edges_to_graph(len(ids), pairs, index, drop_dangling, weights if keep_weights else None)
    return Dataset(graph, features, labels, len(names), ids, names)


FORMATS = ("content-cites", "csv-triple")


def load_dataset(node_file, edge_file, format="content-cites", label_file=None,
                 drop_dangling=False, keep_weights=False) -> Dataset:
    """Load an attributed, labelled graph.

    Args:
        node_file: ``.content`` file, or ``nodes.csv`` for the csv-triple format.
        edge_file: ``.cites`` file, or ``edges.csv``.
        format: ``"content-cites"`` or ``"csv-triple"``.
        label_file: csv-triple only; defaults to ``labels.csv`` next to ``node_file``.
        drop_dangling: skip edges whose endpoints have no node row instead of
            failing (raw Citeseer cites a handful of papers it has no features for).
        keep_weights: csv-triple only; use the optional third edge column as the
            edge weight instead of binarising.

    Edges are symmetrised, self-loops dropped and duplicates collapsed. Node ids
    map to ``[0, n)`` in order of first appearance; labels map to dense integers
    in sorted order.
    """
    for path in (node_file, edge_file):
        if not os.path.isfile(path):
            raise DatasetError(f"no such file: {path}")
    if format == "content-cites":
        return _load_content_cites(node_file, edge_file, drop_dangling)
    if format == "csv-triple":
        if label_file is None:
            label_file = os.path.join(os.path.dirname(os.path.abspath(node_file)), "labels.csv")
        if not os.path.isfile(label_file):
            raise DatasetError(f"no such file: {label_file}")
        return _load_csv_triple(node_file, edge_file, label_file, drop_dangling, keep_weights)
    raise DatasetError(f"unknown format {format!r}; expected one of {FORMATS}")


def dataset_files(data_dir, format="content-cites"):
    """Locate the node and edge files of a dataset directory."""
    if not os.path.isdir(data_dir):
        raise DatasetError(f"no such directory: {data_dir}")
    if format == "csv-triple":
        return os.path.join(data_dir, "nodes.csv"), os.path.join(data_dir, "edges.csv")
    names = sorted(os.listdir(data_dir))
    content = [f for f in names if f.endswith(".content")]
    cites = [f for f in names if f.endswith(".cites")]
    if len(content) != 1:
        raise DatasetError(f"{data_dir}: expected exactly one .content file, found {len(content)}")
    if len(cites) != 1:
        raise DatasetError(f"{data_dir}: expected exactly one .cites file, found {len(cites)}")
    return os.path.join(data_dir, content[0]), os.path.join(data_dir, cites[0])


def load_dir(data_dir, format="content-cites", **kwargs) -> Dataset:
    node_file, edge_file = dataset_files(data_dir, format)
    return load_dataset(node_file, edge_file, format, **kwargs)


def write_csv_triple(ds: Dataset, out_dir):
    """Write ``nodes.csv``, ``edges.csv`` and ``labels.csv`` atomically."""
    from .io import atomic_write

    os.makedirs(out_dir, exist_ok=True)
    ids = ds.node_ids or [str(i) for i in range(ds.n)]
    d = ds.features.shape[1]
    lines = ["id," + ",".join(f"x{k}" for k in range(d))]
    lines += [ids[i] + "," + ",".join(repr(float(v)) for v in ds.features[i]) for i in range(ds.n)]
    atomic_write(os.path.join(out_dir, "nodes.csv"), "\n".join(lines) + "\n")
    edges = ["src,dst"] + [f"{ids[i]},{ids[j]}" for i, j in sorted(ds.graph.edge_set())]
    atomic_write(os.path.join(out_dir, "edges.csv"), "\n".join(edges) + "\n")
    names = ds.label_names or [str(k) for k in range(ds.c)]
    labels = ["id,label"] + [f"{ids[i]},{names[ds.labels[i]]}" for i in range(ds.n)]
    atomic_write(os.path.join(out_dir, "labels.csv"), "\n".join(labels) + "\n")


# --------------------------------------------------------------------------
# synthetic data


def gen_two_rings(n_per_ring=100, p_intra=0.9, seed=0, noise=0.05) -> Dataset:
    """Two concentric rings (radii 1 and 2) with random intra-ring edges.

    Each pair of nodes on the same ring is linked independently with
    probability ``p_intra``; rings are never linked to each other.
    """
    if n_per_ring < 2:
        raise ValueError("n_per_ring must be at least 2")
    if not 0.0 < p_intra <= 1.0:
        raise ValueError("p_intra must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    feats, src, dst = [], [], []
    iu, ju = np.triu_indices(n_per_ring, k=1)
    for ring, radius in enumerate((1.0, 2.0)):
        theta = rng.uniform(0.0, 2.0 * np.pi, n_per_ring)
        r = radius + noise * rng.standard_normal(n_per_ring)
        feats.append(np.column_stack((r * np.cos(theta), r * np.sin(theta))))
        hit = rng.random(iu.shape[0]) < p_intra
        offset = ring * n_per_ring
        src.append(iu[hit] + offset)
        dst.append(ju[hit] + offset)
    n = 2 * n_per_ring
    graph = SparseGraph.from_edges(n, np.concatenate(src), np.concatenate(dst))
    labels = np.repeat(np.arange(2, dtype=np.int64), n_per_ring)
    return Dataset(graph, np.vstack(feats), labels, 2, [str(i) for i in range(n)], ["0", "1"])
