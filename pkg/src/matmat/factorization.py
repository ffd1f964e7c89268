"""Scalar and block matrix factorization models trained by SGD.

The block model fits each t x t target with a product of a per-user (t x d)
and a per-item (d x t) factor block; the classic model fits normalized scalar
ratings with dot products.  Training is plain sequential SGD with a
simultaneous update of both factors from the same residual, a fresh shuffled
visit order every epoch, and everything derived from one seeded generator
(factor draws first, user side then item side, then the per-epoch shuffles),
so runs are exactly reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .blocktarget import BlockSpec, BlockTarget, build_targets
from .dataset import InteractionTable, PopularityTable, Split
from .errors import ConfigError, DataError, DivergenceError

DEFAULT_CLAMP = (0.5, 5.0)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by both trainers."""

    learning_rate: float
    epochs: int
    d: int
    seed: int
    init_std: float = 0.1
    l2: float = 0.0
    clamp: tuple[float, float] = DEFAULT_CLAMP

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.d < 1:
            raise ConfigError(f"latent dimension must be >= 1, got {self.d}")
        if not self.init_std > 0:
            raise ConfigError(f"init_std must be > 0, got {self.init_std}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if not self.clamp[0] < self.clamp[1]:
            raise ConfigError(f"clamp bounds must satisfy lo < hi, got {self.clamp}")


@dataclass(frozen=True)
class LossTrace:
    """Post-epoch training objective values, one per epoch."""

    per_epoch: list[float]


@dataclass(eq=False)
class MatMatModel:
    """Block factors: U holds t x d user blocks, V holds d x t item blocks."""

    U: np.ndarray
    V: np.ndarray
    t: int
    d: int
    max_rating: float
    clamp: tuple[float, float] = DEFAULT_CLAMP


@dataclass(eq=False)
class ClassicModel:
    """Latent vectors of the scalar baseline, trained on normalized ratings."""

    P: np.ndarray
    Q: np.ndarray
    max_rating: float
    clamp: tuple[float, float] = DEFAULT_CLAMP

    @property
    def d(self) -> int:
        return self.P.shape[1]


def _draw_block_factors(rng, n_users, n_items, t, d, init_std):
    U = rng.standard_normal((n_users, t, d)) * init_std
    V = rng.standard_normal((n_items, d, t)) * init_std
    return U, V


def _draw_vector_factors(rng, n_users, n_items, d, init_std):
    P = rng.standard_normal((n_users, d)) * init_std
    Q = rng.standard_normal((n_items, d)) * init_std
    return P, Q


def init_matmat(
    config: TrainConfig,
    n_users: int,
    n_items: int,
    t: int,
    *,
    max_rating: float = 1.0,
) -> MatMatModel:
    """Draw fresh Gaussian factor blocks; same config gives identical models."""
    if n_users < 1 or n_items < 1 or t < 1:
        raise ConfigError("n_users, n_items, and t must be positive")
    rng = np.random.default_rng(config.seed)
    U, V = _draw_block_factors(rng, n_users, n_items, t, config.d, config.init_std)
    return MatMatModel(U=U, V=V, t=t, d=config.d, max_rating=max_rating, clamp=config.clamp)


def matmat_residual(model: MatMatModel, u: int, i: int, target: BlockTarget) -> np.ndarray:
    """Fitting error for one pair: U_u V_i minus the target block."""
    return model.U[u] @ model.V[i] - target.values


def block_gradients(Uu: np.ndarray, Vi: np.ndarray, R: np.ndarray):
    """Gradients of ||Uu Vi - R||^2 with respect to Uu and Vi."""
    E = Uu @ Vi - R
    return 2.0 * E @ Vi.T, 2.0 * Uu.T @ E


def sgd_step(
    model: MatMatModel,
    u: int,
    i: int,
    target: BlockTarget,
    learning_rate: float,
    l2: float = 0.0,
):
    """Apply one simultaneous SGD update to U_u and V_i in place.

    Both gradients are taken at the pre-update factors.  Returns the updated
    (U_u, V_i) blocks; raises DivergenceError when an update is non-finite.
    """
    Uu = model.U[u]
    Vi = model.V[i]
    with np.errstate(over="ignore", invalid="ignore"):
        E = Uu @ Vi - target.values
        new_Uu = Uu - learning_rate * (2.0 * E @ Vi.T + 2.0 * l2 * Uu)
        new_Vi = Vi - learning_rate * (2.0 * Uu.T @ E + 2.0 * l2 * Vi)
    if not (np.all(np.isfinite(new_Uu)) and np.all(np.isfinite(new_Vi))):
        raise DivergenceError(f"non-finite factors after update of pair ({u}, {i})")
    model.U[u] = new_Uu
    model.V[i] = new_Vi
    return new_Uu, new_Vi


def block_objective(U, V, us, iis, targets) -> float:
    """Training objective on explicit arrays: sum over pairs of ||U_u V_i - R||^2."""
    products = np.einsum("nak,nkb->nab", U[us], V[iis])
    return float(np.sum((products - targets) ** 2))


def fit_matmat(
    n_users: int,
    n_items: int,
    us: np.ndarray,
    iis: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    t: int,
    *,
    max_rating: float = 1.0,
) -> tuple[MatMatModel, LossTrace]:
    """Fit block factors to explicit (n, t, t) targets by SGD.

    This is the training core; train_matmat wraps it with target assembly
    from a rating table.
    """
    if us.shape[0] == 0:
        raise ConfigError("training set is empty")
    us = np.ascontiguousarray(us, dtype=np.int64)
    iis = np.ascontiguousarray(iis, dtype=np.int64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    U, V = _draw_block_factors(rng, n_users, n_items, t, config.d, config.init_std)

    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(us.shape[0])
        _kernels.block_epoch(U, V, us, iis, targets, order, config.learning_rate, config.l2)
        loss = _kernels.block_loss(U, V, us, iis, targets)
        if not np.isfinite(loss):
            raise DivergenceError(f"training diverged at epoch {epoch}: non-finite loss")
        losses.append(float(loss))

    model = MatMatModel(U=U, V=V, t=t, d=config.d, max_rating=max_rating, clamp=config.clamp)
    return model, LossTrace(per_epoch=losses)


def train_matmat(
    table: InteractionTable,
    pop: PopularityTable,
    spec: BlockSpec,
    split: Split,
    config: TrainConfig,
) -> tuple[MatMatModel, LossTrace]:
    """Assemble target blocks for the training split and fit the block model."""
    if not split.train:
        raise ConfigError("training split is empty")
    us, iis, rs = table.arrays()
    train_idx = np.asarray(split.train, dtype=np.int64)
    us, iis, rs = us[train_idx], iis[train_idx], rs[train_idx]
    targets = build_targets(spec, us, iis, rs, table, pop)
    return fit_matmat(
        table.n_users, table.n_items, us, iis, targets, config, spec.t,
        max_rating=table.max_rating,
    )


def fit_classic(
    n_users: int,
    n_items: int,
    us: np.ndarray,
    iis: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    *,
    max_rating: float = 1.0,
) -> tuple[ClassicModel, LossTrace]:
    """Fit the scalar baseline to explicit normalized targets by SGD."""
    if us.shape[0] == 0:
        raise ConfigError("training set is empty")
    us = np.ascontiguousarray(us, dtype=np.int64)
    iis = np.ascontiguousarray(iis, dtype=np.int64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    P, Q = _draw_vector_factors(rng, n_users, n_items, config.d, config.init_std)

    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(us.shape[0])
        _kernels.scalar_epoch(P, Q, us, iis, targets, order, config.learning_rate, config.l2)
        loss = _kernels.scalar_loss(P, Q, us, iis, targets)
        if not np.isfinite(loss):
            raise DivergenceError(f"training diverged at epoch {epoch}: non-finite loss")
        losses.append(float(loss))

    model = ClassicModel(P=P, Q=Q, max_rating=max_rating, clamp=config.clamp)
    return model, LossTrace(per_epoch=losses)


def train_classic(
    table: InteractionTable,
    split: Split,
    config: TrainConfig,
) -> tuple[ClassicModel, LossTrace]:
    """Fit the scalar baseline to the training split's normalized ratings."""
    if not split.train:
        raise ConfigError("training split is empty")
    us, iis, rs = table.arrays()
    train_idx = np.asarray(split.train, dtype=np.int64)
    us, iis = us[train_idx], iis[train_idx]
    targets = rs[train_idx] / table.max_rating
    return fit_classic(
        table.n_users, table.n_items, us, iis, targets, config,
        max_rating=table.max_rating,
    )


def _clamped(model, values):
    lo, hi = model.clamp
    return np.clip(values, lo, hi)


def predict_matmat(model: MatMatModel, u: int, i: int) -> float:
    """Denormalized rating: max_rating times the mean diagonal of U_u V_i, clamped."""
    product = model.U[u] @ model.V[i]
    raw = model.max_rating * float(np.trace(product)) / model.t
    return float(_clamped(model, raw))


def predict_classic(model: ClassicModel, u: int, i: int) -> float:
    """Denormalized rating: max_rating times p_u . q_i, clamped."""
    raw = model.max_rating * float(np.dot(model.P[u], model.Q[i]))
    return float(_clamped(model, raw))


def predict_many(model, us: np.ndarray, iis: np.ndarray) -> np.ndarray:
    """Vectorized predictions for parallel index arrays."""
    if isinstance(model, MatMatModel):
        sums = np.einsum("nak,nka->n", model.U[us], model.V[iis])
        raw = model.max_rating * sums / model.t
    else:
        sums = np.einsum("nk,nk->n", model.P[us], model.Q[iis])
        raw = model.max_rating * sums
    return _clamped(model, raw)


def score_all_items(model, u: int) -> np.ndarray:
    """Predicted (clamped) rating of user u for every item."""
    if isinstance(model, MatMatModel):
        sums = np.einsum("ak,mka->m", model.U[u], model.V)
        raw = model.max_rating * sums / model.t
    else:
        raw = model.max_rating * (model.Q @ model.P[u])
    return _clamped(model, raw)


# --- persistence -----------------------------------------------------------
#
# Flat little-endian binary layout (documented in the README):
#   magic "MATMATF1" (8 bytes), kind (1 byte: 0 classic / 1 block),
#   n_users, n_items, t, d as uint64, max_rating, clamp lo, clamp hi as
#   float64, then all float64 factor entries row-major: U then V (block)
#   or P then Q (classic).

_MAGIC = b"MATMATF1"
_HEADER = struct.Struct("<8sBQQQQddd")


def save_model(model, path: str) -> None:
    """Write a trained model to the flat binary format."""
    if isinstance(model, MatMatModel):
        kind, t, d = 1, model.t, model.d
        n_users, n_items = model.U.shape[0], model.V.shape[0]
        first, second = model.U, model.V
    elif isinstance(model, ClassicModel):
        kind, t, d = 0, 1, model.d
        n_users, n_items = model.P.shape[0], model.Q.shape[0]
        first, second = model.P, model.Q
    else:
        raise ConfigError(f"cannot save object of type {type(model).__name__}")
    header = _HEADER.pack(
        _MAGIC, kind, n_users, n_items, t, d,
        model.max_rating, model.clamp[0], model.clamp[1],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(first, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(second, dtype="<f8").tobytes())


def load_model(path: str):
    """Read a model written by save_model; returns the matching model class."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise DataError(f"model file {path} is truncated")
    magic, kind, n_users, n_items, t, d, max_rating, lo, hi = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise DataError(f"{path} is not a recognized model file")
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if kind == 1:
        expected = n_users * t * d + n_items * d * t
        if body.shape[0] != expected:
            raise DataError(f"model file {path} has {body.shape[0]} values, expected {expected}")
        U = body[: n_users * t * d].reshape(n_users, t, d).copy()
        V = body[n_users * t * d:].reshape(n_items, d, t).copy()
        return MatMatModel(U=U, V=V, t=t, d=d, max_rating=max_rating, clamp=(lo, hi))
    if kind == 0:
        expected = (n_users + n_items) * d
        if body.shape[0] != expected:
            raise DataError(f"model file {path} has {body.shape[0]} values, expected {expected}")
        P = body[: n_users * d].reshape(n_users, d).copy()
        Q = body[n_users * d:].reshape(n_items, d).copy()
        return ClassicModel(P=P, Q=Q, max_rating=max_rating, clamp=(lo, hi))
    raise DataError(f"model file {path} has unknown kind {kind}")
