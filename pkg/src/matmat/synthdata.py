"""Deterministic synthetic rating corpus shaped like a MovieLens export.

Users carry a taste offset, items carry a quality offset correlated with a
long-tailed popularity profile, and ratings are the noisy sum snapped to the
half-star grid.  Useful for demos and for exercising the full pipeline at
dataset scale when no real ratings file is at hand.
"""

from __future__ import annotations

import numpy as np

from .dataset import RatingRecord


def generate_ratings(
    n_users: int = 610,
    n_items: int = 9724,
    seed: int = 20260809,
    mean_extra: float = 145.0,
) -> list[RatingRecord]:
    """Build a reproducible rating list with popularity skew and user/item structure.

    Every user rates at least 20 items; per-user counts are lognormal with
    the given extra mean, items are drawn without replacement proportional
    to a power-law popularity weight.
    """
    rng = np.random.default_rng(seed)
    user_bias = rng.normal(3.5, 0.45, n_users)
    item_quality = rng.normal(0.0, 0.35, n_items)

    weights = np.arange(1, n_items + 1, dtype=np.float64) ** -0.8
    log_w = np.log(weights)
    # popular items skew slightly better, like real catalogs
    item_quality += 0.2 * (log_w - log_w.mean()) / log_w.std()

    mu = np.log(mean_extra) - 0.5
    counts = 20 + rng.lognormal(mu, 1.0, n_users)
    counts = np.minimum(counts.astype(np.int64), n_items)

    records = []
    timestamp = 1_000_000_000
    for u in range(n_users):
        k = int(counts[u])
        # weighted sampling without replacement via exponential race keys
        keys = rng.exponential(1.0, n_items) / weights
        items = np.argpartition(keys, k - 1)[:k]
        noise = rng.normal(0.0, 0.5, k)
        for i, eps in zip(items, noise):
            raw = user_bias[u] + item_quality[i] + eps
            stars = min(5.0, max(0.5, round(raw * 2.0) / 2.0))
            records.append(RatingRecord(int(u + 1), int(i + 1), stars, timestamp))
            timestamp += 1
    return records


def write_ratings_csv(records: list[RatingRecord], path: str) -> str:
    """Write records in the standard userId,movieId,rating,timestamp layout."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("userId,movieId,rating,timestamp\n")
        for rec in records:
            fh.write(f"{rec.user_ext},{rec.item_ext},{rec.rating:g},{rec.timestamp}\n")
    return path
