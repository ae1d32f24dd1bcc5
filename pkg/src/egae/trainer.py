"""Training loop: pretraining on reconstruction alone, then alternating updates.

Fine-tuning repeats ``outer_iters`` times: ``inner_iters`` gradient steps on
the encoder weights with the indicator ``P`` frozen, followed by a fresh
``P`` and partition from relaxed k-means on the current embedding.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clustering import Indicator, KMeansOptions, partition_rows, rectified_indicator, relaxed_kmeans
from .graph import Dataset, unnormalized_laplacian
from .io import atomic_write
from .linalg import Assignment, kmeans
from .metrics import MetricReport, evaluate
from .model import (EncoderParams, Embedding, GraphContext, _forward, clustering_loss, init_params,
                    loss_and_grad)

log = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    """Non-finite loss or activations during training."""


@dataclass
class TrainConfig:
    alpha: float = 0.01
    beta: float = 0.0
    lr_pretrain: float = 1e-3
    lr_finetune: float = 1e-4
    pretrain_iters: int = 200
    outer_iters: int = 30
    inner_iters: int = 5
    l1_coeff: float = 1e-3
    hidden: int = 256
    embed_dim: int = 128
    restarts: int = 10
    seed: int = 0
    optimizer: str = "adam"
    weighting: str = "balanced"
    clusters: int = 0
    km_restarts: int = 20
    km_max_iter: int = 300
    km_tol: float = 1e-6

    def validate(self):
        for name in ("lr_pretrain", "lr_finetune", "l1_coeff", "alpha", "beta", "km_tol"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("hidden", "embed_dim", "restarts", "km_restarts", "km_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("pretrain_iters", "outer_iters", "inner_iters", "clusters", "seed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.weighting not in ("balanced", "positive", "none"):
            raise ValueError("weighting must be 'balanced', 'positive' or 'none'")
        return self

    def replace(self, **overrides):
        return dataclasses.replace(self, **overrides).validate()

    def to_text(self):
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in dataclasses.fields(self))


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ValueError(f"bad value for {key}: {value!r}") from None
    return value.strip()


def parse_overrides(pairs, base: TrainConfig | None = None) -> TrainConfig:
    """Apply ``key=value`` strings to ``base`` (default config if omitted)."""
    updates = {}
    for item in pairs:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, value)
    return (base or TrainConfig()).replace(**updates)


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    """Read a flat ``key = value`` file; ``#`` starts a comment."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            pairs.append(line)
    try:
        return parse_overrides(pairs, base)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# optimisers


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        corr1 = 1.0 - self.beta1 ** self.t
        corr2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(name, lr):
    return Adam(lr) if name == "adam" else SGD(lr)


# --------------------------------------------------------------------------
# training


@dataclass
class RunResult:
    assignment: Assignment
    embedding: Embedding
    params: EncoderParams
    indicator: Indicator | None
    trace: list
    metrics: MetricReport | None = None
    max_degenerate_rows: int = 0
    jc_updates: list = field(default_factory=list)
    wall_time: float = 0.0
    seed: int = 0

    @property
    def final_total(self):
        return self.trace[-1]["total"] if self.trace else float("nan")


def _context(ds: Dataset, cfg: TrainConfig):
    return GraphContext(ds.graph, ds.features, weighting=cfg.weighting)


def _n_clusters(ds, cfg):
    return cfg.clusters or ds.c


def _tail_energy(z, c):
    # J_c at the optimal indicator for this Z: energy outside the top c directions
    w = np.linalg.eigvalsh(z.T @ z)
    return float(max(np.sum(z * z) - np.sum(w[-c:]), 0.0))


def _record(trace, it, phase, report):
    for name in ("j_r", "j_c", "l1", "total"):
        if not np.isfinite(getattr(report, name)):
            raise TrainingError(f"non-finite loss ({name}) at {phase} iteration {it}")
    trace.append(dict(iter=it, phase=phase, j_r=report.j_r, j_c=report.j_c, l1=report.l1,
                      total=report.total))


def _step(params, ctx, p, alpha, l1_coeff, opt, trace, it, phase):
    try:
        report, (dw1, dw2), emb = loss_and_grad(params, ctx, p, alpha, l1_coeff)
    except FloatingPointError as exc:
        raise TrainingError(f"{exc} at {phase} iteration {it}") from None
    _record(trace, it, phase, report)
    opt.step([params.w1, params.w2], [dw1, dw2])
    return report, emb


def pretrain(ds: Dataset, cfg: TrainConfig, params: EncoderParams | None = None, ctx=None,
             trace: list | None = None) -> EncoderParams:
    """Reconstruction-only training (``alpha = 0``).

    Per-iteration losses are appended to ``trace`` when given. Their ``j_c``
    column holds the relaxed k-means residual at the optimal indicator for
    the current embedding, so it can be compared across phases.
    """
    ctx = ctx or _context(ds, cfg)
    c = _n_clusters(ds, cfg)
    if params is None:
        params = init_params((ds.features.shape[1], cfg.hidden, cfg.embed_dim), cfg.seed)
    trace = [] if trace is None else trace
    opt = make_optimizer(cfg.optimizer, cfg.lr_pretrain)
    for it in range(cfg.pretrain_iters):
        try:
            report, (dw1, dw2), emb = loss_and_grad(params, ctx, None, 0.0, cfg.l1_coeff)
        except FloatingPointError as exc:
            raise TrainingError(f"{exc} at pretrain iteration {it}") from None
        report.j_c = _tail_energy(emb.z, min(c, emb.z.shape[1]))
        _record(trace, it, "pretrain", report)
        opt.step([params.w1, params.w2], [dw1, dw2])
    return params


def _km_options(cfg, outer):
    seed = int(np.random.SeedSequence([cfg.seed, outer + 1]).generate_state(1)[0])
    return KMeansOptions(cfg.km_restarts, cfg.km_max_iter, cfg.km_tol, seed)


def _update_indicator(z, c, cfg, outer, lap_unnorm):
    km = _km_options(cfg, outer)
    if cfg.beta > 0:
        ind = rectified_indicator(z, lap_unnorm, cfg.beta, c)
        return ind, partition_rows(ind.p, c, km)
    return relaxed_kmeans(z, c, km)


def finetune(ds: Dataset, params: EncoderParams, cfg: TrainConfig, ctx=None,
             trace: list | None = None) -> RunResult:
    """Alternate encoder updates with closed-form indicator updates.

    The returned partition comes from the last indicator update, which runs
    after the last gradient step.
    """
    start = time.perf_counter()
    ctx = ctx or _context(ds, cfg)
    c = _n_clusters(ds, cfg)
    trace = [] if trace is None else trace
    lap_unnorm = unnormalized_laplacian(ds.graph) if cfg.beta > 0 else None
    opt = make_optimizer(cfg.optimizer, cfg.lr_finetune)

    cache = _forward(params, ctx.lap, ctx.lx)
    emb = Embedding(cache["z"], cache["degenerate"])
    max_dead = emb.degenerate_rows
    ind, assignment = _update_indicator(emb.z, c, cfg, -1, lap_unnorm)
    jc_updates = []
    it = len(trace)
    for outer in range(cfg.outer_iters):
        for _ in range(cfg.inner_iters):
            _, emb = _step(params, ctx, ind.p, cfg.alpha, cfg.l1_coeff, opt, trace, it, "finetune")
            max_dead = max(max_dead, emb.degenerate_rows)
            it += 1
        cache = _forward(params, ctx.lap, ctx.lx)
        emb = Embedding(cache["z"], cache["degenerate"])
        before = clustering_loss(emb.z, ind.p)
        ind, assignment = _update_indicator(emb.z, c, cfg, outer, lap_unnorm)
        jc_updates.append((before, clustering_loss(emb.z, ind.p)))
        if ind.rank_deficient:
            log.warning("indicator rank deficient at outer iteration %d", outer)
    if emb.degenerate_rows:
        log.warning("%d nodes have an all-zero embedding", emb.degenerate_rows)
    return RunResult(assignment, emb, params, ind, trace, max_degenerate_rows=max_dead,
                     jc_updates=jc_updates, wall_time=time.perf_counter() - start, seed=cfg.seed)


def train_once(ds: Dataset, cfg: TrainConfig) -> RunResult:
    """Pretrain then fine-tune one model with ``cfg.seed``."""
    cfg.validate()
    start = time.perf_counter()
    ctx = _context(ds, cfg)
    trace = []
    params = pretrain(ds, cfg, ctx=ctx, trace=trace)
    result = finetune(ds, params, cfg, ctx=ctx, trace=trace)
    result.wall_time = time.perf_counter() - start
    if ds.labels.size:
        result.metrics = evaluate(result.assignment.labels, ds.labels)
    log.info("seed %d finished in %.1fs%s", cfg.seed, result.wall_time,
             f": acc={result.metrics.acc:.4f} nmi={result.metrics.nmi:.4f} ari={result.metrics.ari:.4f}"
             if result.metrics else "")
    return result


@dataclass
class RunSummary:
    runs: list
    mean: dict | None
    std: dict | None

    @property
    def first(self) -> RunResult:
        return self.runs[0]

    def as_dict(self):
        out = dict(restarts=len(self.runs), seeds=[r.seed for r in self.runs])
        if self.mean is not None:
            out.update(self.mean)
            out["mean"] = self.mean
            out["std"] = self.std
            out["runs"] = [r.metrics.as_dict() for r in self.runs]
        return out


def summarize(reports):
    if not reports or any(r is None for r in reports):
        return None, None
    keys = ("acc", "nmi", "ari")
    table = np.array([[getattr(r, k) for k in keys] for r in reports])
    return dict(zip(keys, table.mean(axis=0).tolist())), dict(zip(keys, table.std(axis=0).tolist()))


def kmeans_baseline(ds: Dataset, cfg: TrainConfig):
    """k-means on the raw features with seeds ``seed, seed+1, ...``.

    Returns the per-seed ``MetricReport`` list and the first seed's assignment.
    """
    cfg.validate()
    c = cfg.clusters or ds.c
    reports, first = [], None
    for r in range(cfg.restarts):
        fit, _ = kmeans(ds.features, c, cfg.km_restarts, cfg.km_max_iter, cfg.km_tol, cfg.seed + r)
        reports.append(evaluate(fit.labels, ds.labels))
        first = fit if first is None else first
    return reports, first


def run(ds: Dataset, cfg: TrainConfig, jobs=1) -> RunSummary:
    """Train ``cfg.restarts`` models with seeds ``seed, seed+1, ...``.

    Each restart retrains from scratch. Results keep restart order whatever
    ``jobs`` is, so the summary is deterministic.
    """
    cfg.validate()
    cfgs = [cfg.replace(seed=cfg.seed + r) for r in range(cfg.restarts)]
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(train_once, [ds] * len(cfgs), cfgs))
    else:
        runs = [train_once(ds, c) for c in cfgs]
    mean, std = summarize([r.metrics for r in runs])
    return RunSummary(runs, mean, std)


def write_trace(path, trace):
    lines = ["iter,phase,j_r,j_c,l1,total"]
    lines += [f"{t['iter']},{t['phase']},{t['j_r']!r},{t['j_c']!r},{t['l1']!r},{t['total']!r}" for t in trace]
    atomic_write(path, "\n".join(lines) + "\n")


def read_trace(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [dict(iter=int(r["iter"]), phase=r["phase"], **{k: float(r[k]) for k in ("j_r", "j_c", "l1", "total")})
            for r in rows]
