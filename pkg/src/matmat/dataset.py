"""MovieLens-format rating ingestion, reindexing, popularity ranks, and splits.

Input files are comma-separated ``userId,movieId,rating,timestamp`` rows with
an optional header.  External ids are remapped to dense indices; popularity is
the number of ratings a user or item has, expressed as an ascending 1-based
rank (the most-rated user/item holds the highest rank).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class RatingRecord:
    """One raw rating event: external ids, star rating, optional timestamp."""

    user_ext: int
    item_ext: int
    rating: float
    timestamp: int = 0


@dataclass(frozen=True, eq=False)
class InteractionTable:
    """Deduplicated ratings reindexed to dense user/item indices.

    ``triples`` holds ``(user_index, item_index, rating)`` sorted by
    ``(user_index, item_index)``; dense indices follow ascending external-id
    order, so index order and external-id order agree.
    """

    n_users: int
    n_items: int
    triples: list[tuple[int, int, float]]
    max_rating: float
    user_map: dict[int, int]
    item_map: dict[int, int]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Triples as parallel arrays (user idx, item idx, rating)."""
        us = np.array([t[0] for t in self.triples], dtype=np.int64)
        iis = np.array([t[1] for t in self.triples], dtype=np.int64)
        rs = np.array([t[2] for t in self.triples], dtype=np.float64)
        return us, iis, rs


@dataclass(frozen=True, eq=False)
class PopularityTable:
    """Per-user and per-item popularity ranks, 1-based, higher = more rated."""

    user_rank: np.ndarray
    item_rank: np.ndarray
    max_user_rank: int
    max_item_rank: int


@dataclass(frozen=True)
class Split:
    """Disjoint train/test partition of triple indices, fixed by the seed."""

    train: list[int]
    test: list[int]
    test_fraction: float
    seed: int


def load_ratings(path: str) -> list[RatingRecord]:
    """Parse a ratings CSV into records, preserving line order.

    The first line is treated as a header when its first field is not an
    integer.  Lines must carry 3 or 4 comma-separated fields; the timestamp
    defaults to 0 when absent.  Raises DataError on unreadable files,
    malformed lines (named by line number), or non-positive ratings.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read ratings file {path}: {exc}") from exc

    records = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if lineno == 1 and not _is_int(parts[0]):
            continue  # header row
        if len(parts) not in (3, 4):
            raise DataError(f"line {lineno}: expected 3 or 4 fields, got {len(parts)}")
        try:
            user_ext = int(parts[0])
            item_ext = int(parts[1])
            rating = float(parts[2])
            timestamp = int(parts[3]) if len(parts) == 4 else 0
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
        if user_ext < 0 or item_ext < 0:
            raise DataError(f"line {lineno}: ids must be non-negative")
        if not math.isfinite(rating) or rating <= 0:
            raise DataError(f"line {lineno}: rating must be finite and positive, got {parts[2]}")
        records.append(RatingRecord(user_ext, item_ext, rating, timestamp))
    return records


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def build_interactions(records: list[RatingRecord]) -> InteractionTable:
    """Reindex records to dense ids and resolve duplicate (user, item) pairs.

    Dense indices are assigned in ascending external-id order.  When the same
    pair was rated more than once, the record with the largest timestamp wins;
    equal timestamps fall back to the last occurrence.
    """
    if not records:
        raise DataError("no interactions")

    user_ids = sorted({r.user_ext for r in records})
    item_ids = sorted({r.item_ext for r in records})
    user_map = {ext: idx for idx, ext in enumerate(user_ids)}
    item_map = {ext: idx for idx, ext in enumerate(item_ids)}

    best: dict[tuple[int, int], tuple[int, float]] = {}
    for rec in records:
        key = (user_map[rec.user_ext], item_map[rec.item_ext])
        kept = best.get(key)
        if kept is None or rec.timestamp >= kept[0]:
            best[key] = (rec.timestamp, rec.rating)

    triples = [(u, i, rating) for (u, i), (_, rating) in sorted(best.items())]
    max_rating = max(r for _, _, r in triples)
    return InteractionTable(
        n_users=len(user_ids),
        n_items=len(item_ids),
        triples=triples,
        max_rating=max_rating,
        user_map=user_map,
        item_map=item_map,
    )


def compute_popularity(table: InteractionTable) -> PopularityTable:
    """Rank users and items by how many ratings they have.

    Entities are sorted by ascending rating count, ties broken by ascending
    external id (equivalently dense index); the 1-based position in that order
    is the rank, so the most-rated entity gets rank n.
    """
    us, iis, _ = table.arrays()
    user_counts = np.bincount(us, minlength=table.n_users)
    item_counts = np.bincount(iis, minlength=table.n_items)
    return PopularityTable(
        user_rank=_ranks(user_counts),
        item_rank=_ranks(item_counts),
        max_user_rank=table.n_users,
        max_item_rank=table.n_items,
    )


def _ranks(counts: np.ndarray) -> np.ndarray:
    # lexsort: primary key counts, ties resolved by ascending index
    order = np.lexsort((np.arange(counts.shape[0]), counts))
    ranks = np.empty(counts.shape[0], dtype=np.int64)
    ranks[order] = np.arange(1, counts.shape[0] + 1)
    return ranks


def split(table: InteractionTable, test_fraction: float, seed: int) -> Split:
    """Partition triple indices into train/test uniformly at random.

    The partition is a pure function of (triple count, fraction, seed); the
    test size is round(fraction * total).
    """
    if not 0 < test_fraction < 1:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(table.triples)
    n_test = int(round(test_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    test = sorted(int(i) for i in perm[:n_test])
    train = sorted(int(i) for i in perm[n_test:])
    return Split(train=train, test=test, test_fraction=test_fraction, seed=seed)
