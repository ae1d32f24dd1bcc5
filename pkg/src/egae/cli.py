"""Command-line interface: ``egae {train,eval,embed,synth,baseline}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .graph import FORMATS, DatasetError, Dataset, gen_two_rings, load_dir, renormalized_laplacian, write_csv_triple
from .io import CheckpointError, atomic_write, load_checkpoint, save_checkpoint
from .metrics import evaluate
from .model import EncoderParams, encode
from .trainer import TrainConfig, TrainingError, kmeans_baseline, load_config, parse_overrides, run, summarize, write_trace

log = logging.getLogger("egae")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


def _setup_logging():
    level = os.environ.get("EGAE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve_config(args) -> TrainConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    cfg = parse_overrides(getattr(args, "set", None) or [], cfg)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _load(args) -> Dataset:
    return load_dir(args.data, args.format, drop_dangling=args.drop_dangling)


def _header(verb, cfg: TrainConfig, args):
    lines = [f"# egae {verb}", f"# data = {getattr(args, 'data', None)}"]
    lines += ["# " + line for line in cfg.to_text().splitlines()]
    print("\n".join(lines), flush=True)


def _write_assignment(path, node_ids, labels):
    rows = ["node_id,cluster"] + [f"{nid},{int(k)}" for nid, k in zip(node_ids, labels)]
    atomic_write(path, "\n".join(rows) + "\n")


def _write_json(path, payload):
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _node_ids(ds):
    return ds.node_ids or [str(i) for i in range(ds.n)]


def cmd_train(args):
    cfg = _resolve_config(args)
    _header("train", cfg, args)
    ds = _load(args)
    if cfg.clusters and cfg.clusters > ds.n:
        raise ValueError(f"clusters={cfg.clusters} exceeds node count {ds.n}")
    summary = run(ds, cfg, jobs=args.jobs)
    first = summary.first
    out = args.out
    os.makedirs(out, exist_ok=True)
    atomic_write(os.path.join(out, "config.txt"), cfg.to_text())
    save_checkpoint(os.path.join(out, "params.ckpt"), first.params.w1, first.params.w2, first.seed)
    write_trace(os.path.join(out, "loss_trace.csv"), first.trace)
    _write_assignment(os.path.join(out, "assignment.csv"), _node_ids(ds), first.assignment.labels)
    if summary.mean is not None:
        _write_json(os.path.join(out, "metrics.json"), summary.as_dict())
        print(json.dumps({k: summary.mean[k] for k in ("acc", "nmi", "ari")}))
    if first.max_degenerate_rows:
        print(f"warning: up to {first.max_degenerate_rows} nodes had an all-zero embedding", file=sys.stderr)
    return EXIT_OK


def _read_assignment(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["node_id", "cluster"]:
            raise ValueError(f"{path}: expected header node_id,cluster")
        out = {}
        for lineno, row in enumerate(reader, 2):
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns")
            try:
                out[row[0]] = int(row[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: cluster must be an integer") from None
    return out


def cmd_eval(args):
    ds = _load(args)
    assigned = _read_assignment(args.assignment)
    ids = _node_ids(ds)
    missing = [nid for nid in ids if nid not in assigned]
    if missing:
        raise ValueError(f"{args.assignment}: no cluster for node {missing[0]}")
    report = evaluate(np.array([assigned[nid] for nid in ids]), ds.labels)
    payload = report.as_dict()
    if args.out:
        _write_json(os.path.join(args.out, "metrics.json"), payload)
    print(json.dumps(payload))
    return EXIT_OK


def cmd_embed(args):
    ds = _load(args)
    w1, w2, seed = load_checkpoint(args.checkpoint)
    if w1.shape[0] != ds.features.shape[1]:
        raise ValueError(f"checkpoint expects {w1.shape[0]} features, dataset has {ds.features.shape[1]}")
    emb = encode(EncoderParams(w1, w2, seed), renormalized_laplacian(ds.graph), ds.features)
    lines = ["node_id," + ",".join(f"z{k}" for k in range(emb.z.shape[1]))]
    lines += [nid + "," + ",".join(repr(float(v)) for v in row) for nid, row in zip(_node_ids(ds), emb.z)]
    atomic_write(os.path.join(args.out, "embedding.csv"), "\n".join(lines) + "\n")
    if emb.degenerate_rows:
        print(f"warning: {emb.degenerate_rows} nodes have an all-zero embedding", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args):
    ds = gen_two_rings(args.n_per_ring, args.p_intra, args.seed if args.seed is not None else 0)
    write_csv_triple(ds, args.out)
    return EXIT_OK


def cmd_baseline(args):
    """k-means on the raw features, ``restarts`` independent seeds."""
    cfg = _resolve_config(args)
    _header("baseline", cfg, args)
    ds = _load(args)
    reports, first = kmeans_baseline(ds, cfg)
    mean, std = summarize(reports)
    payload = dict(mean, mean=mean, std=std, restarts=cfg.restarts,
                   seeds=[cfg.seed + r for r in range(cfg.restarts)], runs=[r.as_dict() for r in reports])
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "metrics.json"), payload)
    _write_assignment(os.path.join(args.out, "assignment.csv"), _node_ids(ds), first.labels)
    print(json.dumps(mean))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors count as input errors (exit 1), not numerical ones
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="egae", description="Graph clustering with an embedding graph auto-encoder.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def data_flags(p, out_required=True):
        p.add_argument("--data", required=True, help="dataset directory")
        p.add_argument("--format", choices=FORMATS, default="content-cites")
        p.add_argument("--drop-dangling", action="store_true",
                       help="ignore edges to nodes without a feature row")
        p.add_argument("--out", required=out_required, help="output directory")

    def config_flags(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="pretrain, fine-tune and cluster")
    data_flags(p)
    config_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="restarts trained in parallel")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score an assignment CSV against the dataset labels")
    data_flags(p, out_required=False)
    p.add_argument("--assignment", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="export the embedding of a trained checkpoint")
    data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("synth", help="write a two-rings dataset in csv-triple format")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-ring", type=int, default=100)
    p.add_argument("--p-intra", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("baseline", help="k-means on raw features")
    data_flags(p)
    config_flags(p)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (TrainingError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, DatasetError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
