"""Clustering metrics: ACC (optimal matching), NMI and ARI."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb


@dataclass
class MetricReport:
    acc: float
    nmi: float
    ari: float

    def as_dict(self):
        return asdict(self)


def _labels(pred, truth):
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} predictions vs {truth.shape[0]} labels")
    # re-index both so arbitrary (even negative or sparse) ids are fine
    _, pred = np.unique(pred, return_inverse=True)
    _, truth = np.unique(truth, return_inverse=True)
    return pred, truth


def contingency(pred, truth):
    pred, truth = _labels(pred, truth)
    table = np.zeros((pred.max(initial=-1) + 1, truth.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return table


def acc(pred, truth) -> float:
    """Fraction of nodes matched under the best one-to-one relabelling of ``pred``."""
    table = contingency(pred, truth)
    if table.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth, average="geometric") -> float:
    """Mutual information normalised by the geometric (or arithmetic) mean entropy.

    Natural logarithms. Defined as 0 whenever either partition has a single
    cluster.
    """
    table = contingency(pred, truth)
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 0.0
    n = table.sum()
    pi = table.sum(axis=1)
    pj = table.sum(axis=0)
    nz = table > 0
    outer = np.outer(pi, pj)
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / outer[nz])))
    h_pred, h_truth = _entropy(pi), _entropy(pj)
    if average == "geometric":
        denom = np.sqrt(h_pred * h_truth)
    elif average == "arithmetic":
        denom = 0.5 * (h_pred + h_truth)
    else:
        raise ValueError(f"unknown average {average!r}")
    if denom <= 0:
        return 0.0
    return float(min(max(mi / denom, 0.0), 1.0))


def ari(pred, truth) -> float:
    """Pair-counting Rand index corrected for chance."""
    table = contingency(pred, truth)
    n = int(table.sum())
    if n < 2:
        return 1.0
    sum_ij = float(comb(table, 2).sum())
    sum_a = float(comb(table.sum(axis=1), 2).sum())
    sum_b = float(comb(table.sum(axis=0), 2).sum())
    total = comb(n, 2)
    expected = sum_a * sum_b / total
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        # both partitions trivial (all singletons or one cluster each)
        return 1.0
    return float((sum_ij - expected) / (maximum - expected))


def evaluate(pred, truth) -> MetricReport:
    return MetricReport(acc(pred, truth), nmi(pred, truth), ari(pred, truth))
