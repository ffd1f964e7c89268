import os

import pytest

from matmat.dataset import build_interactions, compute_popularity
from matmat.synthdata import generate_ratings, write_ratings_csv

# Candidate locations for a real MovieLens ratings.csv; the acceptance suite
# falls back to the synthetic corpus when none is present.
REAL_DATA_ENV = "MATMAT_DATA"
REAL_DATA_DEFAULT = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "data", "ml-latest-small", "ratings.csv",
)


def real_ratings_path():
    env = os.environ.get(REAL_DATA_ENV)
    if env and os.path.exists(env):
        return env
    if os.path.exists(REAL_DATA_DEFAULT):
        return REAL_DATA_DEFAULT
    return None


@pytest.fixture(scope="session")
def ml_corpus(tmp_path_factory):
    """Desk-scale rating corpus: the real ratings.csv when available, else synthetic.

    Returns (csv_path, source) where source is "real" or "synthetic".
    """
    real = real_ratings_path()
    if real is not None:
        return real, "real"
    path = tmp_path_factory.mktemp("data") / "ratings.csv"
    write_ratings_csv(generate_ratings(), str(path))
    return str(path), "synthetic"


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A quick 60-user corpus for harness and CLI tests."""
    records = generate_ratings(n_users=60, n_items=80, seed=99, mean_extra=15.0)
    path = tmp_path_factory.mktemp("data") / "small.csv"
    write_ratings_csv(records, str(path))
    return str(path)


@pytest.fixture(scope="session")
def small_table(small_corpus):
    from matmat.dataset import load_ratings

    table = build_interactions(load_ratings(small_corpus))
    return table


@pytest.fixture(scope="session")
def small_pop(small_table):
    return compute_popularity(small_table)
