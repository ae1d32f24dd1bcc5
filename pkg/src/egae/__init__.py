"""Embedding graph auto-encoder for attributed-graph clustering."""
from .clustering import relaxed_kmeans, rectified_indicator
from .graph import Dataset, SparseGraph, gen_two_rings, load_dataset, load_dir
from .metrics import evaluate
from .model import encode, init_params
from .trainer import TrainConfig, finetune, kmeans_baseline, pretrain, run, train_once

__all__ = [
    "Dataset", "SparseGraph", "TrainConfig", "encode", "evaluate", "finetune", "gen_two_rings",
    "init_params", "kmeans_baseline", "load_dataset", "load_dir", "pretrain", "rectified_indicator", "relaxed_kmeans",
    "run", "train_once",
]
__version__ = "0.1.0"
