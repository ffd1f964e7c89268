"""Accuracy metrics, the Matthew-degree exposure metric, and storage estimates.

The Matthew degree measures how concentrated top-K recommendation exposure
is: recommendation frequencies are ranked descending and an ordinary least
squares line is fit to log frequency versus log rank; the negated slope is
the degree.  0 means uniform exposure, larger means stronger rich-get-richer
concentration (an exact power law r^-alpha yields alpha).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dataset import InteractionTable, Split
from .errors import ConfigError, MetricError
from .factorization import score_all_items


@dataclass(frozen=True)
class EvalReport:
    """Evaluation outcome of one trained model on one test split."""

    mae: float
    rmse: float
    matthew_degree: float
    n_test: int
    n_cold: int
    algorithm: str
    learning_rate: float
    seed: int
    diverged: bool = False


@dataclass(frozen=True)
class TopKLists:
    """Per-user recommendation lists (item indices, best first)."""

    k: int
    lists: list[list[int]]


def mae(predictions, actuals) -> float:
    """Mean absolute error between parallel prediction/actual sequences."""
    p, a = _paired(predictions, actuals)
    return float(np.mean(np.abs(p - a)))


def rmse(predictions, actuals) -> float:
    """Root mean squared error between parallel prediction/actual sequences."""
    p, a = _paired(predictions, actuals)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def _paired(predictions, actuals):
    p = np.asarray(predictions, dtype=np.float64)
    a = np.asarray(actuals, dtype=np.float64)
    if p.shape[0] == 0:
        raise MetricError("no prediction pairs to score")
    if p.shape != a.shape:
        raise MetricError(f"length mismatch: {p.shape[0]} predictions vs {a.shape[0]} actuals")
    return p, a


def topk(model, table: InteractionTable, split: Split, k: int) -> TopKLists:
    """Top-k unrated items per user, scored by the model.

    Candidates are all items the user did not rate in the training split,
    ranked by predicted rating descending with ties broken by ascending item
    index; results are assembled in user-index order.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    us, iis, _ = table.arrays()
    train_idx = np.asarray(split.train, dtype=np.int64)
    rated: list[set[int]] = [set() for _ in range(table.n_users)]
    for u, i in zip(us[train_idx], iis[train_idx]):
        rated[u].add(int(i))

    lists = []
    for u in range(table.n_users):
        scores = score_all_items(model, u)
        order = np.argsort(-scores, kind="stable")
        picked = []
        exclude = rated[u]
        for i in order:
            if int(i) in exclude:
                continue
            picked.append(int(i))
            if len(picked) == k:
                break
        lists.append(picked)
    return TopKLists(k=k, lists=lists)


def matthew_degree(lists: TopKLists) -> float:
    """Matthew degree of the exposure distribution in recommendation lists."""
    counts = Counter()
    for items in lists.lists:
        counts.update(items)
    return matthew_degree_from_frequencies(np.array(sorted(counts.values(), reverse=True), dtype=np.float64))


def matthew_degree_from_frequencies(frequencies) -> float:
    """Negated log-log OLS slope of a recommendation-frequency distribution.

    Zero frequencies are dropped (their log is undefined); at least two
    recommended items are required.  Equal frequencies give exactly 0.
    """
    f = np.asarray(frequencies, dtype=np.float64)
    f = f[f > 0]
    if f.shape[0] < 2:
        raise MetricError("need at least 2 items with non-zero recommendation frequency")
    f = np.sort(f)[::-1]
    if f[0] == f[-1]:
        return 0.0  # constant line has slope 0 by definition
    x = np.log(np.arange(1, f.shape[0] + 1, dtype=np.float64))
    y = np.log(f)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    return -slope


def storage_footprint(
    n_users: int,
    n_items: int,
    t: int,
    d: int,
    bytes_per_value: int,
) -> tuple[int, int]:
    """Bytes needed to store the dense block-target tensor vs the factor blocks.

    Returns (tensor_bytes, matmat_bytes); exact integers, so planetary-scale
    arguments cannot overflow.
    """
    for name, value in (
        ("n_users", n_users), ("n_items", n_items), ("t", t),
        ("d", d), ("bytes_per_value", bytes_per_value),
    ):
        if value < 1:
            raise ConfigError(f"{name} must be positive, got {value}")
    tensor_bytes = n_users * n_items * t * t * bytes_per_value
    matmat_bytes = (n_users + n_items) * t * d * bytes_per_value
    return tensor_bytes, matmat_bytes
